#include "causalshift/serialization.hpp"

#include <fstream>
#include <sstream>

#include "causalshift/errors.hpp"
#include "json.hpp"

namespace causalshift {

namespace {

using nlohmann::json;

json parse(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParameterError(std::string("malformed JSON: ") + e.what());
  }
}

// Turns nlohmann type/out-of-range errors into ParameterError.
template <class F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParameterError(std::string("invalid document: ") + e.what());
  }
}

void expect_format(const json& j, std::string_view format) {
  if (j.at("format").get<std::string>() != format)
    throw ParameterError("expected a '" + std::string(format) + "' document");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw ParameterError("unsupported document version");
}

json matrix_json(const BinaryMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(m(i, j) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return rows;
}

BinaryMatrix matrix_from(const json& rows, std::size_t n) {
  if (rows.size() != n) throw ParameterError("matrix has the wrong number of rows");
  BinaryMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    const json& row = rows.at(i);
    if (row.size() != n) throw ParameterError("matrix row has the wrong length");
    for (std::size_t j = 0; j < n; ++j) {
      const int bit = row.at(j).get<int>();
      if (bit != 0 && bit != 1) throw ParameterError("matrix entries must be 0 or 1");
      m.set(i, j, bit == 1);
    }
  }
  return m;
}

json params_json(const MlpParams& p) {
  return {{"w1", p.w1}, {"b1", p.b1}, {"w2", p.w2}, {"b2", p.b2}};
}

void load_params(const json& j, MlpParams& p) {
  auto load = [&j](const char* key, std::vector<double>& dst) {
    auto src = j.at(key).get<std::vector<double>>();
    if (src.size() != dst.size()) throw ParameterError(std::string("parameter array '") + key + "' has the wrong size");
    dst = std::move(src);
  };
  load("w1", p.w1);
  load("b1", p.b1);
  load("w2", p.w2);
  load("b2", p.b2);
}

json real_matrix(const std::vector<double>& values, std::size_t n) {
  json rows = json::array();
  for (std::size_t i = 0; i < n; ++i)
    rows.push_back(std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(i * n),
                                       values.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
  return rows;
}

std::vector<double> real_matrix_from(const json& rows, std::size_t n) {
  if (rows.size() != n) throw ParameterError("matrix has the wrong number of rows");
  std::vector<double> out;
  out.reserve(n * n);
  for (const json& row : rows) {
    auto r = row.get<std::vector<double>>();
    if (r.size() != n) throw ParameterError("matrix row has the wrong length");
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace

std::string dag_to_json(const Dag& dag) {
  return json{{"n", dag.size()}, {"adjacency", matrix_json(dag.adjacency())}}.dump();
}

Dag dag_from_json(std::string_view text) {
  return guarded([&] {
    const json j = parse(text);
    const auto n = j.at("n").get<std::size_t>();
    return Dag(matrix_from(j.at("adjacency"), n));
  });
}

std::string checkpoint_to_json(const ModelCheckpoint& checkpoint) {
  const ModelStack& s = checkpoint.stack;
  json modules = json::array();
  for (const MaskedMlp& m : s.modules()) modules.push_back(params_json(m.params()));
  json j{{"format", "causalshift.model"},
         {"version", kCheckpointVersion},
         {"n", s.n()},
         {"k", s.k()},
         {"hidden", s.hidden()},
         {"optimizer", checkpoint.optimizer == OptimizerConfig::Kind::adam ? "adam" : "sgd"},
         {"masks", matrix_json(s.masks())},
         {"modules", std::move(modules)}};
  return j.dump();
}

ModelCheckpoint checkpoint_from_json(std::string_view text) {
  return guarded([&] {
    const json j = parse(text);
    expect_format(j, "causalshift.model");
    const auto n = j.at("n").get<std::size_t>();
    ModelCheckpoint out{ModelStack(n, j.at("k").get<std::size_t>(), j.at("hidden").get<std::size_t>())};
    const auto opt = j.at("optimizer").get<std::string>();
    if (opt == "adam") {
      out.optimizer = OptimizerConfig::Kind::adam;
    } else if (opt == "sgd") {
      out.optimizer = OptimizerConfig::Kind::sgd;
    } else {
      throw ParameterError("unknown optimizer kind '" + opt + "'");
    }
    out.stack.set_masks(matrix_from(j.at("masks"), n));
    const json& modules = j.at("modules");
    if (modules.size() != n) throw ParameterError("checkpoint needs one parameter set per module");
    for (std::size_t i = 0; i < n; ++i) load_params(modules.at(i), out.stack.module(i).params());
    return out;
  });
}

std::string scm_to_json(const GroundTruthScm& scm) {
  json mechanisms = json::array();
  for (const MaskedMlp& m : scm.mechanisms()) mechanisms.push_back(params_json(m.params()));
  const std::size_t hidden = scm.size() == 0 ? kScmHidden : scm.mechanism(0).hidden();
  json j{{"format", "causalshift.scm"},
         {"version", kCheckpointVersion},
         {"n", scm.size()},
         {"k", scm.k()},
         {"hidden", hidden},
         {"adjacency", matrix_json(scm.dag().adjacency())},
         {"mechanisms", std::move(mechanisms)}};
  return j.dump();
}

GroundTruthScm scm_from_json(std::string_view text) {
  return guarded([&] {
    const json j = parse(text);
    expect_format(j, "causalshift.scm");
    const auto n = j.at("n").get<std::size_t>();
    const auto k = j.at("k").get<std::size_t>();
    const auto hidden = j.at("hidden").get<std::size_t>();
    Dag dag(matrix_from(j.at("adjacency"), n));
    const json& list = j.at("mechanisms");
    if (list.size() != n) throw ParameterError("scm needs one mechanism per node");
    std::vector<MaskedMlp> mechanisms;
    for (std::size_t i = 0; i < n; ++i) {
      MaskedMlp m(n, k, i, hidden);
      m.set_mask(dag.adjacency().row(i));
      load_params(list.at(i), m.params());
      mechanisms.push_back(std::move(m));
    }
    return GroundTruthScm(std::move(dag), k, std::move(mechanisms));
  });
}

std::string gamma_to_json(const SoftAdjacency& gamma) {
  const std::size_t n = gamma.size();
  json j{{"n", n},
         {"probabilities", real_matrix(gamma.probabilities(), n)},
         {"u", real_matrix(gamma.u_values(), n)},
         {"v", real_matrix(gamma.v_values(), n)}};
  return j.dump();
}

SoftAdjacency gamma_from_json(std::string_view text) {
  return guarded([&] {
    const json j = parse(text);
    const auto n = j.at("n").get<std::size_t>();
    SoftAdjacency g(n);
    g.u_values() = real_matrix_from(j.at("u"), n);
    g.v_values() = real_matrix_from(j.at("v"), n);
    return g;
  });
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace causalshift
