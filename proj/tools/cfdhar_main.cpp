// SPDX-License-Identifier: Apache-2.0
#include "cfdhar/cli/cli.hpp"

int main(int argc, char** argv) { return cfdhar::cli::run(argc, argv); }
