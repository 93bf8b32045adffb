# Tests package for SafeCharge
# unittest suites for every station, learning and experiment module
