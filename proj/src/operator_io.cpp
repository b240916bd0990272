#include "tscs/operator_io.hpp"

#include "tscs/tensor_io.hpp"

#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace tscs {

namespace {

using nlohmann::json;

constexpr const char *kFormat = "tscs-operator";
constexpr int kVersion = 1;

json weights_to_json(const TensorSumLayer &layer) {
  json all = json::array();
  for (const auto &branch : layer.branches()) {
    json row = json::array();
    for (const auto &f : branch) row.push_back(base64_encode(encode_tensor(as_tensor(f.weights))));
    all.push_back(std::move(row));
  }
  return all;
}

std::vector<std::vector<DenseMatrix>> weights_from_json(const json &all, std::size_t branches, std::size_t modes) {
  if (!all.is_array() || all.size() != branches) throw FormatError("operator file: weights do not match branches");
  std::vector<std::vector<DenseMatrix>> out;
  for (const auto &row : all) {
    if (!row.is_array() || row.size() != modes) throw FormatError("operator file: weights do not match modes");
    auto &dst = out.emplace_back();
    for (const auto &blob : row) dst.push_back(as_matrix(decode_tensor(base64_decode(blob.get<std::string>()))));
  }
  return out;
}

json header(const char *kind, const Shape &in, const Shape &out, std::size_t branches, const BasisPlan &plan,
            std::uint64_t seed, const std::string &init) {
  return json{{"format", kFormat}, {"version", kVersion}, {"kind", kind},
              {"input_shape", in},   {"output_shape", out}, {"branches", branches},
              {"basis_plan", plan},  {"seed", seed},        {"init", init}};
}

json parse_checked(const std::string &text, const char *kind) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw FormatError(fmt::format("operator file: {}", e.what()));
  }
  if (doc.value("format", "") != kFormat) throw FormatError("operator file: missing format tag");
  if (doc.value("version", 0) != kVersion) throw FormatError("operator file: unsupported version");
  if (doc.value("kind", "") != kind) {
    throw FormatError(fmt::format("operator file: expected kind '{}', found '{}'", kind, doc.value("kind", "")));
  }
  return doc;
}

} // namespace

std::string serialize_operator(const TensorSumOperator &op) {
  const auto &c = op.config;
  auto doc = header("sensing", op.input_shape(), op.output_shape(), op.branch_count(), c.basis_plan, c.seed,
                    c.init == WeightInit::identity ? "identity" : "gaussian");
  doc["weights"] = weights_to_json(op.layer);
  return doc.dump(1);
}

TensorSumOperator deserialize_operator(const std::string &text) {
  const auto doc = parse_checked(text, "sensing");
  OperatorConfig c;
  c.input_shape = doc.at("input_shape").get<Shape>();
  c.output_shape = doc.at("output_shape").get<Shape>();
  c.branches = doc.at("branches").get<std::size_t>();
  c.basis_plan = doc.at("basis_plan").get<BasisPlan>();
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.init = doc.at("init").get<std::string>() == "identity" ? WeightInit::identity : WeightInit::gaussian;

  auto op = build_operator(c);
  auto weights = weights_from_json(doc.at("weights"), c.branches, c.input_shape.size());
  std::vector<Branch> branches = op.layer.branches();
  for (std::size_t t = 0; t < branches.size(); ++t)
    for (std::size_t j = 0; j < branches[t].size(); ++j) branches[t][j].weights = std::move(weights[t][j]);
  op.layer = TensorSumLayer(c.input_shape, c.output_shape, std::move(branches));
  return op;
}

std::string serialize_adjoint(const AdjointOperator &adj) {
  const bool gaussian = adj.init.kind == AdjointInit::Kind::gaussian;
  // Shapes recorded from the sensing side: input = signal, output = measurement.
  auto doc = header("adjoint", adj.output_shape(), adj.input_shape(), adj.layer.branch_count(), adj.basis_plan,
                    adj.init.seed, gaussian ? "gaussian" : "transpose");
  doc["weights"] = weights_to_json(adj.layer);
  return doc.dump(1);
}

AdjointOperator deserialize_adjoint(const std::string &text) {
  const auto doc = parse_checked(text, "adjoint");
  const auto signal = doc.at("input_shape").get<Shape>();
  const auto measurement = doc.at("output_shape").get<Shape>();
  const auto branches = doc.at("branches").get<std::size_t>();
  const auto plan = doc.at("basis_plan").get<BasisPlan>();
  AdjointInit init;
  init.seed = doc.at("seed").get<std::uint64_t>();
  init.kind = doc.at("init").get<std::string>() == "gaussian" ? AdjointInit::Kind::gaussian
                                                              : AdjointInit::Kind::transpose;
  if (!plan.empty() && (plan.size() != branches || plan[0].size() != signal.size())) {
    throw FormatError("operator file: basis plan does not match shapes");
  }
  auto weights = weights_from_json(doc.at("weights"), branches, signal.size());
  std::vector<Branch> layer(branches);
  for (std::size_t t = 0; t < branches; ++t) {
    for (std::size_t j = 0; j < signal.size(); ++j) {
      FactorMatrix f;
      f.composition = Composition::synthesis;
      f.weights = std::move(weights[t][j]);
      f.basis = make_basis(signal[j], plan.empty() ? 0 : plan[t][j]).inverse();
      layer[t].push_back(std::move(f));
    }
  }
  return AdjointOperator{init, plan, TensorSumLayer(measurement, signal, std::move(layer))};
}

void save_operator(const std::filesystem::path &path, const TensorSumOperator &op) {
  write_file_atomic(path, serialize_operator(op));
}

TensorSumOperator load_operator(const std::filesystem::path &path) {
  return deserialize_operator(read_text_file(path));
}

void save_adjoint(const std::filesystem::path &path, const AdjointOperator &adj) {
  write_file_atomic(path, serialize_adjoint(adj));
}

AdjointOperator load_adjoint(const std::filesystem::path &path) { return deserialize_adjoint(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

} // namespace tscs
