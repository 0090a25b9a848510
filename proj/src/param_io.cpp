#include "fedseit/param_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace fedseit {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'P', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw std::runtime_error("truncated parameter pack");
  return value;
}

}  // namespace

void write_pack(std::ostream& out, const ParameterPack& pack) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(pack.size()));
  for (const auto& entry : pack) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entry.name.size()));
    out.write(entry.name.data(), static_cast<std::streamsize>(entry.name.size()));
    // A default-constructed tensor is written as an empty vector.
    const Shape shape = entry.value.empty() && entry.value.rank() == 0 ? Shape{0} : entry.value.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(entry.value.data().data()),
              static_cast<std::streamsize>(entry.value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing parameter pack");
}

ParameterPack read_pack(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a parameter pack");
  if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("unsupported parameter pack version");
  const auto count = get<std::uint32_t>(in);
  ParameterPack pack;
  pack.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray entry;
    entry.name.resize(get<std::uint32_t>(in));
    if (!in.read(entry.name.data(), static_cast<std::streamsize>(entry.name.size()))) {
      throw std::runtime_error("truncated parameter pack");
    }
    Shape shape(get<std::uint32_t>(in));
    for (auto& d : shape) d = get<std::uint64_t>(in);
    std::vector<double> data(element_count(shape));
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw std::runtime_error("truncated parameter pack");
    }
    entry.value = Tensor(std::move(shape), std::move(data));
    pack.push_back(std::move(entry));
  }
  return pack;
}

void save_pack(const std::filesystem::path& path, const ParameterPack& pack) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_pack(out, pack);
}

ParameterPack load_pack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_pack(in);
}

const Tensor* try_find_array(const ParameterPack& pack, std::string_view name) {
  for (const auto& entry : pack)
    if (entry.name == name) return &entry.value;
  return nullptr;
}

const Tensor& find_array(const ParameterPack& pack, std::string_view name) {
  if (const Tensor* t = try_find_array(pack, name)) return *t;
  throw std::runtime_error("parameter pack has no array '" + std::string(name) + "'");
}

void append_bank(ParameterPack& pack, const std::string& prefix, const FilterBank& bank) {
  for (std::size_t l = 0; l < bank.size(); ++l) pack.push_back({prefix + "/" + std::to_string(l), bank[l]});
}

FilterBank extract_bank(const ParameterPack& pack, const std::string& prefix, std::size_t sizes) {
  FilterBank bank;
  for (std::size_t l = 0; l < sizes; ++l) bank.push_back(find_array(pack, prefix + "/" + std::to_string(l)));
  return bank;
}

ParameterPack pack_task(const FilterBank& base, const TaskState& task) {
  ParameterPack pack;
  append_bank(pack, "B", base);
  append_bank(pack, "A", task.adaptive);
  append_bank(pack, "m", task.mask_logits);
  pack.push_back({"alpha", task.attention});
  pack.push_back({"W_f", task.foreign_projection});
  pack.push_back({"W_c", task.combine_projection});
  pack.push_back({"head", task.head});
  pack.push_back({"meta", Tensor::vector({static_cast<double>(task.task_id), static_cast<double>(task.num_labels),
                                          task.frozen ? 1.0 : 0.0, static_cast<double>(task.n_foreign())})});
  for (std::size_t i = 0; i < task.foreign.size(); ++i) {
    const auto& f = task.foreign[i];
    const std::string prefix = "foreign/" + std::to_string(i);
    pack.push_back({prefix + "/source",
                    Tensor::vector({static_cast<double>(f.source_client), static_cast<double>(f.source_task)})});
    append_bank(pack, prefix, f.filters);
  }
  if (task.frozen) {
    append_bank(pack, "B_snapshot", task.base_snapshot);
    append_bank(pack, "A_snapshot", task.adaptive_snapshot);
  }
  return pack;
}

TaskState unpack_task(const ParameterPack& pack, std::size_t sizes, FilterBank* base) {
  if (base) *base = extract_bank(pack, "B", sizes);
  TaskState task;
  const Tensor& meta = find_array(pack, "meta");
  if (meta.size() != 4) throw std::runtime_error("malformed task metadata");
  task.task_id = static_cast<int>(meta[0]);
  task.num_labels = static_cast<std::size_t>(meta[1]);
  task.frozen = meta[2] != 0.0;
  const auto n_foreign = static_cast<std::size_t>(meta[3]);
  task.adaptive = extract_bank(pack, "A", sizes);
  task.mask_logits = extract_bank(pack, "m", sizes);
  task.attention = find_array(pack, "alpha");
  task.foreign_projection = find_array(pack, "W_f");
  task.combine_projection = find_array(pack, "W_c");
  task.head = find_array(pack, "head");
  for (std::size_t i = 0; i < n_foreign; ++i) {
    const std::string prefix = "foreign/" + std::to_string(i);
    const Tensor& source = find_array(pack, prefix + "/source");
    task.foreign.push_back({static_cast<int>(source[0]), static_cast<int>(source[1]), extract_bank(pack, prefix, sizes)});
  }
  if (task.frozen) {
    task.base_snapshot = extract_bank(pack, "B_snapshot", sizes);
    task.adaptive_snapshot = extract_bank(pack, "A_snapshot", sizes);
  }
  return task;
}

}  // namespace fedseit
