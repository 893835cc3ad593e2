#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dadapt/tensor.hpp"

namespace dadapt::models {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Ordered named tensors.
class ParamTable {
public:
    void put(std::string name, num::Tensor value);
    bool contains(const std::string& name) const;
    /// Throws CheckpointError when missing.
    const num::Tensor& get(const std::string& name) const;
    bool has_prefix(const std::string& prefix) const;
    const std::vector<std::pair<std::string, num::Tensor>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, num::Tensor>> entries_;
};

// Container layout, all integers little-endian:
//   "DADAPTCK"               8-byte magic
//   u32 version              currently 1
//   u32 entry count
//   per entry:
//     u32 name length, name bytes (UTF-8)
//     u32 rank, u64 extent * rank
//     f64 value * numel      (IEEE-754 binary64)
inline constexpr char kCheckpointMagic[8] = {'D', 'A', 'D', 'A', 'P', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ParamTable& table);
ParamTable read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ParamTable& table);
ParamTable load_checkpoint(const std::filesystem::path& path);

}  // namespace dadapt::models
