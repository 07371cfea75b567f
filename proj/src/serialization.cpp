#include "vtl/serialization.hpp"

#include "csv_util.hpp"
#include "vtl/errors.hpp"

#include <fstream>

namespace vtl {

using nlohmann::json;

namespace {
constexpr const char* kSnapshotFormat = "vtl-posterior";
constexpr int kSnapshotVersion = 1;
}  // namespace

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw LoadError("matrix must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw LoadError("matrix rows must have equal length");
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row.at(static_cast<size_t>(k)).get<double>();
  }
  return m;
}

json vector_to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json to_json(const PriorHyperparams& prior) {
  return {{"m0", vector_to_json(prior.m0)},
          {"beta0", prior.beta0},
          {"nu0", prior.nu0},
          {"W0", matrix_to_json(prior.W0)},
          {"alpha0", prior.alpha0}};
}

PriorHyperparams prior_from_json(const json& j) {
  PriorOverrides o;
  o.m0 = vector_from_json(j.at("m0"));
  o.beta0 = j.at("beta0").get<double>();
  o.nu0 = j.at("nu0").get<double>();
  o.W0 = matrix_from_json(j.at("W0"));
  o.alpha0 = j.at("alpha0").get<double>();
  return init_prior(o.m0->size(), o);
}

json to_json(const SourcePosterior& post) {
  json subjects = json::array();
  for (size_t s = 0; s < post.subjects.size(); ++s) {
    json classes = json::array();
    for (const auto& c : post.subjects[s]) {
      classes.push_back({{"beta", c.beta}, {"m", vector_to_json(c.m)}, {"alpha", c.alpha}});
    }
    subjects.push_back({{"id", post.subject_ids.at(s)},
                        {"weight", post.weights.at(s)},
                        {"classes", std::move(classes)}});
  }
  json shared = json::array();
  for (size_t c = 0; c < static_cast<size_t>(post.num_classes); ++c) {
    shared.push_back({{"nu_src", post.nu_src[c]},
                      {"W_inv_src", matrix_to_json(post.W_inv_src[c])},
                      {"beta_pooled", post.beta_pooled[c]},
                      {"m_pooled", vector_to_json(post.m_pooled[c])}});
  }
  return {{"num_classes", post.num_classes},
          {"dim", post.dim},
          {"subjects", std::move(subjects)},
          {"classes", std::move(shared)}};
}

SourcePosterior source_posterior_from_json(const json& j) {
  SourcePosterior post;
  post.num_classes = j.at("num_classes").get<int>();
  post.dim = j.at("dim").get<Eigen::Index>();
  for (const auto& s : j.at("subjects")) {
    post.subject_ids.push_back(s.at("id").get<std::string>());
    post.weights.push_back(s.at("weight").get<double>());
    auto& classes = post.subjects.emplace_back();
    for (const auto& c : s.at("classes")) {
      classes.push_back({c.at("beta").get<double>(), vector_from_json(c.at("m")),
                         c.at("alpha").get<double>()});
    }
  }
  for (const auto& c : j.at("classes")) {
    post.nu_src.push_back(c.at("nu_src").get<double>());
    post.W_inv_src.push_back(matrix_from_json(c.at("W_inv_src")));
    post.beta_pooled.push_back(c.at("beta_pooled").get<double>());
    post.m_pooled.push_back(vector_from_json(c.at("m_pooled")));
  }
  if (static_cast<int>(post.nu_src.size()) != post.num_classes) {
    throw LoadError("source posterior class count mismatch");
  }
  return post;
}

json to_json(const TargetPosterior& post) {
  json classes = json::array();
  for (const auto& c : post.classes) {
    classes.push_back({{"beta", c.beta},
                       {"m", vector_to_json(c.m)},
                       {"nu", c.nu},
                       {"W_inv", matrix_to_json(c.W_inv)},
                       {"alpha", c.alpha}});
  }
  return {{"mode", std::string(to_string(post.mode))}, {"classes", std::move(classes)}};
}

TargetPosterior target_posterior_from_json(const json& j) {
  TargetPosterior post;
  post.mode = parse_transfer_mode(j.at("mode").get<std::string>());
  for (const auto& c : j.at("classes")) {
    post.classes.push_back({c.at("beta").get<double>(), vector_from_json(c.at("m")),
                            c.at("nu").get<double>(), matrix_from_json(c.at("W_inv")),
                            c.at("alpha").get<double>()});
  }
  return post;
}

void write_snapshot(const std::filesystem::path& path, const PosteriorSnapshot& snap) {
  json j = {{"format", kSnapshotFormat},
            {"version", kSnapshotVersion},
            {"prior", to_json(snap.prior)},
            {"target", to_json(snap.target)}};
  if (snap.source) j["source"] = to_json(*snap.source);
  auto out = detail::open_for_write(path);
  out << j.dump(2) << '\n';
}

PosteriorSnapshot read_snapshot(const std::filesystem::path& path) {
  auto in = detail::open_for_read(path);
  json j;
  try {
    in >> j;
    if (j.value("format", "") != kSnapshotFormat) throw LoadError("not a posterior snapshot");
    PosteriorSnapshot snap;
    snap.prior = prior_from_json(j.at("prior"));
    snap.target = target_posterior_from_json(j.at("target"));
    if (j.contains("source")) snap.source = source_posterior_from_json(j.at("source"));
    return snap;
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace vtl
