#include "mrgp/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mrgp/errors.hpp"

namespace mrgp {

namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::VectorXd json_vec(const json& a) {
  if (!a.is_array()) throw InvalidConfig("model JSON: expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

Eigen::MatrixXd json_mat(const json& a, Eigen::Index cols_if_empty = 0) {
  if (!a.is_array()) throw InvalidConfig("model JSON: expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(a.size());
  const Eigen::Index cols = rows == 0 ? cols_if_empty : static_cast<Eigen::Index>(a[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& r = a[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) throw InvalidConfig("model JSON: ragged matrix");
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r[static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

json transform_json(const ColumnTransform& t) { return {{"mean", vec_json(t.mean)}, {"std", vec_json(t.std)}}; }

ColumnTransform json_transform(const json& j) { return {json_vec(j.at("mean")), json_vec(j.at("std"))}; }

}  // namespace

std::string serialize_model(const Model& model) {
  json doc;
  doc["version"] = kModelFormatVersion;
  doc["dt"] = model.dt;
  doc["input_dim"] = model.input_dim;
  doc["emission"] = {{"out_dim", model.emission.out_dim}, {"obs_noise_diag", vec_json(model.emission.obs_noise_diag)}};
  if (model.normalization) {
    doc["normalization"] = {{"u", transform_json(model.normalization->u)}, {"y", transform_json(model.normalization->y)}};
  } else {
    doc["normalization"] = nullptr;
  }
  json comps = json::array();
  for (std::size_t l = 0; l < model.components.size(); ++l) {
    const ComponentParams& c = model.components[l];
    json latent = json::array();
    for (int d = 0; d < c.dim; ++d) {
      const auto i = static_cast<std::size_t>(d);
      latent.push_back({{"kernel", {{"variance", c.kernels[i].variance}, {"lengthscales", vec_json(c.kernels[i].lengthscales)}}},
                        {"m_M", vec_json(c.q_fM[i].mean)},
                        {"S_M_chol", mat_json(c.q_fM[i].chol)}});
    }
    comps.push_back({{"dim", c.dim},
                     {"resolution", c.resolution},
                     {"m0", vec_json(c.m0)},
                     {"S0_chol", mat_json(c.S0_chol)},
                     {"Q_diag", vec_json(c.Q_diag)},
                     {"prior_x0", {{"mean", vec_json(model.prior_x0[l].mean())}, {"cov", mat_json(model.prior_x0[l].cov())}}},
                     {"inducing", mat_json(c.inducing.inputs)},
                     {"latent", std::move(latent)}});
  }
  doc["components"] = std::move(comps);
  return doc.dump(2) + "\n";
}

Model parse_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("model JSON does not parse: ") + e.what());
  }
  try {
    if (doc.at("version").get<int>() != kModelFormatVersion)
      throw InvalidConfig("unsupported model format version " + doc.at("version").dump());
    Model m;
    m.dt = doc.at("dt").get<double>();
    m.input_dim = doc.at("input_dim").get<int>();
    m.emission.out_dim = doc.at("emission").at("out_dim").get<int>();
    m.emission.obs_noise_diag = json_vec(doc.at("emission").at("obs_noise_diag"));
    if (doc.contains("normalization") && !doc["normalization"].is_null()) {
      m.normalization = Normalization{json_transform(doc["normalization"].at("u")), json_transform(doc["normalization"].at("y"))};
    }
    for (const json& cj : doc.at("components")) {
      ComponentParams c;
      c.dim = cj.at("dim").get<int>();
      c.resolution = cj.at("resolution").get<int>();
      c.m0 = json_vec(cj.at("m0"));
      c.S0_chol = json_mat(cj.at("S0_chol"));
      c.Q_diag = json_vec(cj.at("Q_diag"));
      c.inducing.inputs = json_mat(cj.at("inducing"));
      for (const json& lj : cj.at("latent")) {
        c.kernels.emplace_back(lj.at("kernel").at("variance").get<double>(), json_vec(lj.at("kernel").at("lengthscales")));
        c.q_fM.push_back({json_vec(lj.at("m_M")), json_mat(lj.at("S_M_chol"))});
      }
      m.prior_x0.emplace_back(json_vec(cj.at("prior_x0").at("mean")), json_mat(cj.at("prior_x0").at("cov")));
      m.components.push_back(std::move(c));
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("model JSON is malformed: ") + e.what());
  }
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidConfig("cannot write " + path);
  out << serialize_model(model);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfig("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace mrgp
