#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "minima/activation.hpp"
#include "minima/branches.hpp"
#include "minima/network.hpp"
#include "minima/samples.hpp"

namespace minima {

using json = nlohmann::json;

json to_json(const ActivationSpec& act);
ActivationSpec activation_from_json(const json& j);

json to_json(const TargetNetwork& target);
TargetNetwork target_from_json(const json& j);

/// {target, samples, activation}; labels are recomputed on load and checked
/// against a "labels" field when present.
json to_json(const LossContext& ctx);
LossContext loss_context_from_json(const json& j);

json to_json(const SampleSet& samples);
SampleSet sample_set_from_json(const json& j);

json to_json(const RankReport& rep);

/// {r, q, pi}
json to_json(const Branch& branch);
Branch branch_from_json(const json& j, int m0, int d);

/// Stable decimal formatting ("%.17g") so equal runs emit equal bytes.
std::string format_double(double v);

/// Minimal CSV emitter with the project's formatting rules.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns);
  void add_row(const std::vector<std::string>& cells);
  std::string str() const;
  void write_file(const std::string& path) const;
  static std::string cell(double v) { return format_double(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(std::uint64_t v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "true" : "false"; }
  static std::string cell(const std::string& v) { return v; }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// "0-1-3" style partition label used in CSV cells.
std::string partition_label(const Partition& p);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace minima
