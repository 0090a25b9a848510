#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "fedseit/model.hpp"
#include "fedseit/tensor.hpp"

namespace fedseit {

struct NamedArray {
  std::string name;
  Tensor value;

  bool operator==(const NamedArray&) const = default;
};

/// Ordered list of named, shape-tagged f64 arrays.
using ParameterPack = std::vector<NamedArray>;

/// Binary layout, little-endian:
///   "FSPK" | u32 version | u32 count |
///   count x ( u32 name_len | name | u32 rank | rank x u64 dim | f64 data... )
void write_pack(std::ostream& out, const ParameterPack& pack);
ParameterPack read_pack(std::istream& in);
void save_pack(const std::filesystem::path& path, const ParameterPack& pack);
ParameterPack load_pack(const std::filesystem::path& path);

const Tensor& find_array(const ParameterPack& pack, std::string_view name);
const Tensor* try_find_array(const ParameterPack& pack, std::string_view name);

/// Appends `bank` as "<prefix>/0", "<prefix>/1", ...
void append_bank(ParameterPack& pack, const std::string& prefix, const FilterBank& bank);
FilterBank extract_bank(const ParameterPack& pack, const std::string& prefix, std::size_t sizes);

/// Frozen evaluation bundle of one task: the client's base followed by the
/// task parameters in the order B, A, m, alpha, W_f, W_c, head, then the
/// foreign adapters and the end-of-task snapshots.
ParameterPack pack_task(const FilterBank& base, const TaskState& task);
TaskState unpack_task(const ParameterPack& pack, std::size_t sizes, FilterBank* base = nullptr);

}  // namespace fedseit
