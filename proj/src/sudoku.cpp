#include "mse/sudoku.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace mse {

namespace {

inline int box_of(int r, int c) { return (r / 3) * 3 + c / 3; }

// Bitmask solver state: bit d set means digit d+1 is taken.
struct Masks {
    std::array<uint16_t, 9> row{}, col{}, box{};

    bool can_place(int r, int c, int d) const {
        uint16_t bit = uint16_t(1) << d;
        return !(row[r] & bit) && !(col[c] & bit) && !(box[box_of(r, c)] & bit);
    }
    void place(int r, int c, int d) {
        uint16_t bit = uint16_t(1) << d;
        row[r] |= bit;
        col[c] |= bit;
        box[box_of(r, c)] |= bit;
    }
    void remove(int r, int c, int d) {
        uint16_t bit = ~(uint16_t(1) << d);
        row[r] &= bit;
        col[c] &= bit;
        box[box_of(r, c)] &= bit;
    }
};

int count_solutions_rec(std::array<uint8_t, 81>& grid, Masks& m, int cap, int found) {
    // most-constrained empty cell first
    int best = -1, best_options = 10;
    for (int i = 0; i < 81 && best_options > 1; ++i) {
        if (grid[i]) continue;
        int r = i / 9, c = i % 9;
        int options = 0;
        for (int d = 0; d < 9; ++d) options += m.can_place(r, c, d);
        if (options == 0) return found;
        if (options < best_options) {
            best_options = options;
            best = i;
        }
    }
    if (best < 0) return found + 1;  // full grid
    int r = best / 9, c = best % 9;
    for (int d = 0; d < 9 && found < cap; ++d) {
        if (!m.can_place(r, c, d)) continue;
        grid[best] = (uint8_t)(d + 1);
        m.place(r, c, d);
        found = count_solutions_rec(grid, m, cap, found);
        m.remove(r, c, d);
        grid[best] = 0;
    }
    return found;
}

bool fill_random(std::array<uint8_t, 81>& grid, Masks& m, int cell, std::mt19937_64& rng) {
    if (cell == 81) return true;
    if (grid[cell]) return fill_random(grid, m, cell + 1, rng);
    int r = cell / 9, c = cell % 9;
    std::array<int, 9> digits;
    std::iota(digits.begin(), digits.end(), 0);
    std::shuffle(digits.begin(), digits.end(), rng);
    for (int d : digits) {
        if (!m.can_place(r, c, d)) continue;
        grid[cell] = (uint8_t)(d + 1);
        m.place(r, c, d);
        if (fill_random(grid, m, cell + 1, rng)) return true;
        m.remove(r, c, d);
        grid[cell] = 0;
    }
    return false;
}

}  // namespace

bool sudoku_grid_valid(const std::array<uint8_t, 81>& grid) {
    std::array<uint16_t, 9> row{}, col{}, box{};
    for (int i = 0; i < 81; ++i) {
        int d = grid[i];
        if (d < 1 || d > 9) return false;
        uint16_t bit = uint16_t(1) << (d - 1);
        int r = i / 9, c = i % 9, b = box_of(r, c);
        if ((row[r] & bit) || (col[c] & bit) || (box[b] & bit)) return false;
        row[r] |= bit;
        col[c] |= bit;
        box[b] |= bit;
    }
    return true;
}

bool sudoku_consistent(const SudokuPuzzle& p) {
    if (!sudoku_grid_valid(p.solution)) return false;
    for (int i = 0; i < 81; ++i)
        if (p.givens[i] && p.givens[i] != p.solution[i]) return false;
    return true;
}

int sudoku_count_solutions(const std::array<uint8_t, 81>& givens, int cap) {
    std::array<uint8_t, 81> grid = givens;
    Masks m;
    for (int i = 0; i < 81; ++i) {
        if (!grid[i]) continue;
        int r = i / 9, c = i % 9, d = grid[i] - 1;
        if (!m.can_place(r, c, d)) return 0;  // contradictory givens
        m.place(r, c, d);
    }
    return count_solutions_rec(grid, m, cap, 0);
}

std::vector<SudokuPuzzle> sudoku_load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open sudoku file '" + path + "'");
    std::vector<SudokuPuzzle> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = "sudoku line " + std::to_string(line_no);
        if (line.size() != 163 || line[81] != ',')
            throw DataError(where + ": expected 81 digits, ',', 81 digits");
        SudokuPuzzle p;
        for (int i = 0; i < 81; ++i) {
            char g = line[i], s = line[82 + i];
            if (g < '0' || g > '9' || s < '0' || s > '9')
                throw DataError(where + ": non-digit character");
            p.givens[i] = (uint8_t)(g - '0');
            p.solution[i] = (uint8_t)(s - '0');
        }
        if (!sudoku_consistent(p))
            throw DataError(where + ": solution violates sudoku constraints or givens");
        out.push_back(p);
    }
    return out;
}

void sudoku_save(const std::string& path, const std::vector<SudokuPuzzle>& puzzles) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write sudoku file '" + path + "'");
    for (const SudokuPuzzle& p : puzzles) {
        for (uint8_t g : p.givens) out << (char)('0' + g);
        out << ',';
        for (uint8_t s : p.solution) out << (char)('0' + s);
        out << '\n';
    }
}

SudokuPuzzle sudoku_transform(const SudokuPuzzle& p, const std::array<int, 3>& stacks,
                              const std::array<int, 3>& bands, bool transpose) {
    SudokuPuzzle out;
    for (int r = 0; r < 9; ++r) {
        for (int c = 0; c < 9; ++c) {
            int sr = stacks[r / 3] * 3 + r % 3;  // row-group permutation
            int sc = bands[c / 3] * 3 + c % 3;   // column-group permutation
            int src = transpose ? sc * 9 + sr : sr * 9 + sc;
            out.givens[r * 9 + c] = p.givens[src];
            out.solution[r * 9 + c] = p.solution[src];
        }
    }
    return out;
}

SudokuPuzzle sudoku_augment(const SudokuPuzzle& p, std::mt19937_64& rng) {
    std::array<int, 3> stacks{0, 1, 2}, bands{0, 1, 2};
    std::shuffle(stacks.begin(), stacks.end(), rng);
    std::shuffle(bands.begin(), bands.end(), rng);
    bool transpose = (rng() & 1) != 0;
    return sudoku_transform(p, stacks, bands, transpose);
}

std::vector<SudokuPuzzle> sudoku_generate(int count, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<SudokuPuzzle> out;
    out.reserve(count);
    while ((int)out.size() < count) {
        SudokuPuzzle p;
        Masks m;
        if (!fill_random(p.solution, m, 0, rng)) continue;
        p.givens = p.solution;

        // thin in random order while the solution stays unique
        std::array<int, 81> order;
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::uniform_int_distribution<int> target_givens(28, 38);
        const int stop_at = target_givens(rng);
        for (int cell : order) {
            if (p.given_count() <= stop_at) break;
            uint8_t keep = p.givens[cell];
            p.givens[cell] = 0;
            if (sudoku_count_solutions(p.givens, 2) != 1) p.givens[cell] = keep;
        }
        out.push_back(p);
    }
    return out;
}

TaskInstance sudoku_instance(const SudokuPuzzle& p) {
    TaskInstance inst;
    inst.task = TaskId::sudoku;
    inst.n = 9;
    inst.k = 4;
    inst.input.assign(inst.cells(), task_info(TaskId::sudoku).pad_symbol);
    inst.target.assign(inst.cells(), 0);
    inst.mask.assign(inst.cells(), 0);
    const int side = inst.side();
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) {
            inst.input[(size_t)r * side + c] = p.givens[r * 9 + c];
            inst.target[(size_t)r * side + c] = p.solution[r * 9 + c];
            inst.mask[(size_t)r * side + c] = 1;
        }
    return inst;
}

}  // namespace mse
