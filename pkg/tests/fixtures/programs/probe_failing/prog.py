values = [10, 20]
total = 0
for v in values:
    total += v
assert total == 999, "wrong total"
