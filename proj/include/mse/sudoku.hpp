#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mse/tasks.hpp"

namespace mse {

// 9x9 puzzles, row-major; 0 marks a blank cell in the givens.
struct SudokuPuzzle {
    std::array<uint8_t, 81> givens{};
    std::array<uint8_t, 81> solution{};

    int given_count() const {
        int n = 0;
        for (uint8_t g : givens) n += g != 0;
        return n;
    }
};

// Complete grid with every row, column and 3x3 subregion holding 1..9 once.
bool sudoku_grid_valid(const std::array<uint8_t, 81>& grid);

// Valid solution that also agrees with the givens everywhere they are set.
bool sudoku_consistent(const SudokuPuzzle& p);

// CSV lines "puzzle,solution", 81 digits each, 0 = blank. Rejects malformed
// lines and rows whose solution violates the constraints or the givens.
std::vector<SudokuPuzzle> sudoku_load(const std::string& path);
void sudoku_save(const std::string& path, const std::vector<SudokuPuzzle>& puzzles);

// Validity-preserving transformation: optional transposition plus permutations
// of the three row groups (stacks) and three column groups (bands).
SudokuPuzzle sudoku_transform(const SudokuPuzzle& p, const std::array<int, 3>& stacks,
                              const std::array<int, 3>& bands, bool transpose);

// Random composition of the transformations above.
SudokuPuzzle sudoku_augment(const SudokuPuzzle& p, std::mt19937_64& rng);

// Deterministic generator used for the desk-scale dataset: random complete
// grids thinned while the solution stays unique.
std::vector<SudokuPuzzle> sudoku_generate(int count, uint64_t seed);

// Number of complete solutions, counted up to the given cap.
int sudoku_count_solutions(const std::array<uint8_t, 81>& givens, int cap = 2);

// 9x9 puzzle embedded in the 16x16 padded grid, mask on the 9x9 region.
TaskInstance sudoku_instance(const SudokuPuzzle& p);

}  // namespace mse
