// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

// Writes the deterministic synthetic text corpus: make_corpus <path> [bytes] [seed]

#include <iostream>
#include <string>

#include "trams/cli_io.hpp"

int main(int argc, char** argv) {
    if (argc < 2 || argc > 4) {
        std::cerr << "usage: make_corpus <path> [bytes=1000000] [seed=0]\n";
        return 1;
    }
    try {
        const std::size_t bytes = argc > 2 ? std::stoull(argv[2]) : 1000000;
        const std::uint64_t seed = argc > 3 ? std::stoull(argv[3]) : 0;
        trams::write_text_file(argv[1], trams::synthetic_corpus(bytes, seed));
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
