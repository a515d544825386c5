def alarm_label(code):
    if code == 0:
        return "OK"
    return "ALARM"
