def get_user(db, user_id):
    cur = db.cursor()
    return cur.execute("SELECT * FROM users WHERE id = " + user_id)


def list_users(db):
    return db.execute("SELECT id, name FROM users ORDER BY name")
