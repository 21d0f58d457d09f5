#include "minima/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace minima {

json to_json(const ActivationSpec& act) {
  json j;
  j["kind"] = act_kind_name(act.kind);
  j["shift"] = act.shift;
  j["series_depth"] = act.series_depth;
  if (!act.coeffs.empty()) j["coeffs"] = act.coeffs;
  return j;
}

ActivationSpec activation_from_json(const json& j) {
  ActivationSpec act;
  act.kind = act_kind_from_name(j.at("kind").get<std::string>());
  act.shift = j.value("shift", 0.0);
  act.series_depth = j.value("series_depth", 64);
  if (j.contains("coeffs")) act.coeffs = j.at("coeffs").get<std::vector<double>>();
  act.validate();
  return act;
}

json to_json(const TargetNetwork& target) {
  json j;
  j["bar_a"] = std::vector<double>(target.bar_a.data(), target.bar_a.data() + target.bar_a.size());
  json ws = json::array();
  for (const auto& w : target.bar_w) ws.push_back(std::vector<double>(w.data(), w.data() + w.size()));
  j["bar_w"] = ws;
  return j;
}

TargetNetwork target_from_json(const json& j) {
  TargetNetwork t;
  auto a = j.at("bar_a").get<std::vector<double>>();
  t.m0 = static_cast<int>(a.size());
  t.bar_a = Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  for (const auto& wj : j.at("bar_w")) {
    auto w = wj.get<std::vector<double>>();
    t.bar_w.push_back(Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())));
  }
  t.d = t.bar_w.empty() ? 0 : static_cast<int>(t.bar_w.front().size());
  t.validate();
  return t;
}

json to_json(const LossContext& ctx) {
  json j;
  j["target"] = to_json(ctx.target);
  json xs = json::array();
  for (const auto& x : ctx.samples) xs.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  j["samples"] = xs;
  j["activation"] = to_json(ctx.activation);
  j["labels"] = std::vector<double>(ctx.labels.data(), ctx.labels.data() + ctx.labels.size());
  return j;
}

LossContext loss_context_from_json(const json& j) {
  TargetNetwork target = target_from_json(j.at("target"));
  ActivationSpec act = activation_from_json(j.at("activation"));
  std::vector<Eigen::VectorXd> samples;
  for (const auto& xj : j.at("samples")) {
    auto x = xj.get<std::vector<double>>();
    samples.push_back(Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
  }
  LossContext ctx = LossContext::make(std::move(target), std::move(samples), std::move(act));
  if (j.contains("labels")) {
    auto labels = j.at("labels").get<std::vector<double>>();
    if (static_cast<int>(labels.size()) != ctx.n())
      throw std::invalid_argument("loss context: label count mismatch");
    for (int i = 0; i < ctx.n(); ++i)
      if (std::abs(labels[static_cast<std::size_t>(i)] - ctx.labels[i]) >
          1e-12 * (1.0 + std::abs(ctx.labels[i])))
        throw std::invalid_argument("loss context: stored labels disagree with recomputation");
  }
  return ctx;
}

namespace {
const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Random: return "random";
    case Provenance::ConstructedTypeI: return "constructed_type1";
    case Provenance::ConstructedTypeII: return "constructed_type2";
    case Provenance::Perturbed: return "perturbed";
  }
  return "random";
}
Provenance provenance_from_name(const std::string& s) {
  if (s == "random") return Provenance::Random;
  if (s == "constructed_type1") return Provenance::ConstructedTypeI;
  if (s == "constructed_type2") return Provenance::ConstructedTypeII;
  if (s == "perturbed") return Provenance::Perturbed;
  throw std::invalid_argument("unknown provenance: " + s);
}
}  // namespace

json to_json(const SampleSet& samples) {
  json j;
  json pts = json::array();
  for (const auto& x : samples.points) pts.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  j["points"] = pts;
  j["seed"] = samples.seed;
  j["provenance"] = provenance_name(samples.provenance);
  if (samples.provenance == Provenance::Perturbed) {
    j["base_seed"] = samples.base_seed;
    j["eps"] = samples.eps;
  }
  return j;
}

SampleSet sample_set_from_json(const json& j) {
  SampleSet s;
  for (const auto& xj : j.at("points")) {
    auto x = xj.get<std::vector<double>>();
    s.points.push_back(Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
  }
  s.seed = j.value("seed", 0ULL);
  s.provenance = provenance_from_name(j.value("provenance", "random"));
  s.base_seed = j.value("base_seed", 0ULL);
  s.eps = j.value("eps", 0.0);
  return s;
}

json to_json(const RankReport& rep) {
  json j;
  j["matrix_rows"] = rep.matrix_rows;
  j["matrix_cols"] = rep.matrix_cols;
  j["singular_values"] = rep.singular_values;
  j["numerical_rank"] = rep.numerical_rank;
  j["tolerance"] = rep.tolerance;
  j["margin"] = rep.margin;
  return j;
}

json to_json(const Branch& branch) {
  json j;
  j["r"] = branch.r();
  j["q"] = branch.partition.q;
  j["pi"] = branch.perm;
  return j;
}

Branch branch_from_json(const json& j, int m0, int d) {
  Branch b;
  b.partition.q = j.at("q").get<std::vector<int>>();
  b.perm = j.at("pi").get<std::vector<int>>();
  b.m = b.partition.m();
  b.m0 = m0;
  b.d = d;
  b.validate();
  return b;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_.size()) throw std::invalid_argument("CsvWriter: column count mismatch");
  rows_.push_back(cells);
}

std::string CsvWriter::str() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
  out << "\n";
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  return out.str();
}

void CsvWriter::write_file(const std::string& path) const { write_text_file(path, str()); }

std::string partition_label(const Partition& p) {
  std::ostringstream out;
  for (std::size_t i = 0; i < p.q.size(); ++i) out << (i ? "-" : "") << p.q[i];
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << content;
}

}  // namespace minima
