// Copyright 2026 The NEOS Toolkit Authors.
// Licensed under the Apache License, Version 2.0.

#include <iostream>

#include "neos/cli.hpp"

int main(int argc, char** argv) { return neos::run_cli(argc, argv, std::cout, std::cerr); }
