def needs_retry(status):
    if status >= 500:
        return True
    return False
