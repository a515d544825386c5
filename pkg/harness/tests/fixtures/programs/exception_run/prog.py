raise ValueError("bad input")
