from solution import scale_power_of_two


def test_scale_up():
    assert scale_power_of_two(3, 2) == 12


def test_scale_down():
    assert scale_power_of_two(16, -2) == 4
