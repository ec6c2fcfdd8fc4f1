#include "uasabi/io.hpp"

#include "uasabi/error.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace uasabi {
namespace fs = std::filesystem;
using detail::json;
using detail::ObjectReader;

namespace {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(what + ": invalid JSON (" + e.what() + ")");
  }
}

std::string dump(const json& j) { return j.dump(1, '\t') + "\n"; }

std::vector<std::string> default_names(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i + 1));
  return names;
}

json mlp_to_json(const MlpSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& w) {
  json j;
  j["widths"] = spec.widths;
  j["activation"] = to_string(spec.hidden);
  json layers = json::array();
  Eigen::Index off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const int rows = spec.widths[l + 1], cols = spec.widths[l];
    const Eigen::Map<const Eigen::MatrixXd> W(w.data() + off, rows, cols);
    off += Eigen::Index{rows} * cols;
    json layer;
    layer["W"] = detail::mat_to_json(W);
    layer["b"] = detail::vec_to_json(w.segment(off, rows));
    off += rows;
    layers.push_back(layer);
  }
  j["layers"] = layers;
  return j;
}

MlpSpec mlp_spec_from_json(const json& j, const std::string& path) {
  MlpSpec s;
  try {
    s.widths = j.at("widths").get<std::vector<int>>();
    s.hidden = activation_from_string(j.at("activation").get<std::string>());
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(path + ": malformed network description");
  } catch (const InvalidParameter& e) {
    throw SchemaError(path + ": " + e.what());
  }
  if (s.widths.size() < 2) throw SchemaError(path + ": network needs at least two widths");
  return s;
}

void mlp_weights_from_json(const json& j, const MlpSpec& spec, Eigen::Ref<Eigen::VectorXd> w,
                           const std::string& path) {
  ObjectReader r(j, path);
  r.at("widths");
  r.at("activation");
  const json& layers = r.at("layers");
  r.finish();
  if (!layers.is_array() || static_cast<int>(layers.size()) != spec.n_layers())
    throw SchemaError(path + ": layer count does not match widths");
  Eigen::Index off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const int rows = spec.widths[l + 1], cols = spec.widths[l];
    const std::string p = path + ".layers[" + std::to_string(l) + "]";
    ObjectReader lr(layers[static_cast<std::size_t>(l)], p);
    const Eigen::MatrixXd W = detail::mat_from_json(lr.at("W"), rows, cols, p + ".W");
    const Eigen::VectorXd b = detail::vec_from_json(lr.at("b"), p + ".b");
    lr.finish();
    if (b.size() != rows) throw SchemaError(p + ".b: wrong length");
    Eigen::Map<Eigen::MatrixXd>(w.data() + off, rows, cols) = W;
    off += Eigen::Index{rows} * cols;
    w.segment(off, rows) = b;
    off += rows;
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::string& context) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw SchemaError(context + ": cannot parse '" + std::string(text) + "' as a number");
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "'");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

std::string file_digest(const fs::path& path) {
  const std::string bytes = read_text(path);
  return hex64(fnv1a(bytes.data(), bytes.size()));
}

Eigen::Index CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<Eigen::Index>(i);
  return -1;
}

CsvTable read_csv(const fs::path& path) {
  const auto lines = lines_of(read_text(path));
  if (lines.empty()) throw SchemaError(path.string() + ": empty file, header row expected");
  CsvTable t;
  t.header = split(lines[0], ',');
  t.values.resize(static_cast<Eigen::Index>(lines.size()) - 1, static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split(lines[r], ',');
    if (fields.size() != t.header.size())
      throw SchemaError(path.string() + ": row " + std::to_string(r) + " has " +
                        std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(t.header.size()));
    for (std::size_t c = 0; c < fields.size(); ++c)
      t.values(static_cast<Eigen::Index>(r) - 1, static_cast<Eigen::Index>(c)) = parse_double(
          fields[c], path.string() + ": row " + std::to_string(r) + ", column '" + t.header[c] + "'");
  }
  return t;
}

std::string csv_text(const std::vector<std::string>& header, const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(header.size()) != values.cols())
    throw DimensionMismatch("csv: header width does not match values");
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values) {
  write_text(path, csv_text(header, values));
}

TabularDataset load_dataset(const fs::path& path, const std::vector<std::string>& expected_x,
                            const std::vector<std::string>& expected_omega) {
  const CsvTable t = read_csv(path);
  TabularDataset d;
  std::vector<Eigen::Index> xc, wc, yc;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    const std::string& h = t.header[i];
    const auto idx = static_cast<Eigen::Index>(i);
    if (h.rfind("x_", 0) == 0) {
      d.x_names.push_back(h);
      xc.push_back(idx);
    } else if (h.rfind("omega_", 0) == 0) {
      d.omega_names.push_back(h);
      wc.push_back(idx);
    } else if (h.rfind("y_", 0) == 0) {
      d.y_names.push_back(h);
      yc.push_back(idx);
    } else {
      throw SchemaError(path.string() + ": column '" + h + "' is not named x_*, omega_* or y_*");
    }
  }
  auto reorder = [&](const std::vector<std::string>& expected, std::vector<std::string>& names,
                     std::vector<Eigen::Index>& cols) {
    if (expected.empty()) return;
    std::vector<Eigen::Index> out;
    for (const auto& e : expected) {
      const Eigen::Index c = t.column(e);
      if (c < 0) throw SchemaError(path.string() + ": missing column '" + e + "'");
      out.push_back(c);
    }
    if (expected.size() != names.size()) {
      for (const auto& n : names)
        if (std::find(expected.begin(), expected.end(), n) == expected.end())
          throw SchemaError(path.string() + ": unexpected column '" + n + "'");
    }
    names = expected;
    cols = out;
  };
  reorder(expected_x, d.x_names, xc);
  reorder(expected_omega, d.omega_names, wc);
  if (wc.empty()) throw SchemaError(path.string() + ": no omega_* column");
  if (yc.empty()) throw SchemaError(path.string() + ": no y_* column");
  auto gather = [&](const std::vector<Eigen::Index>& cols) {
    Eigen::MatrixXd m(t.values.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = t.values.col(cols[i]);
    return m;
  };
  d.x = gather(xc);
  d.omega = gather(wc);
  d.y = gather(yc);
  if (!t.values.allFinite()) throw SchemaError(path.string() + ": non-finite values");
  return d;
}

void save_dataset(const fs::path& path, const TabularDataset& d) {
  std::vector<std::string> header = d.x_names;
  header.insert(header.end(), d.omega_names.begin(), d.omega_names.end());
  header.insert(header.end(), d.y_names.begin(), d.y_names.end());
  Eigen::MatrixXd v(d.rows(), d.x.cols() + d.omega.cols() + d.y.cols());
  v << d.x, d.omega, d.y;
  write_csv(path, header, v);
}

void write_draws_csv(const fs::path& path, const Eigen::MatrixXd& draws, std::vector<std::string> names) {
  if (names.empty()) names = default_names("omega_", draws.cols());
  write_csv(path, names, draws);
}

ObservationSet read_observation_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<Eigen::Index> xc, yc;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i].rfind("x_", 0) == 0) xc.push_back(static_cast<Eigen::Index>(i));
    else if (t.header[i].rfind("y_", 0) == 0) yc.push_back(static_cast<Eigen::Index>(i));
    else throw SchemaError(path.string() + ": column '" + t.header[i] + "' is not named x_* or y_*");
  }
  ObservationSet s;
  s.x.resize(t.values.rows(), static_cast<Eigen::Index>(xc.size()));
  s.y.resize(t.values.rows(), static_cast<Eigen::Index>(yc.size()));
  for (std::size_t i = 0; i < xc.size(); ++i) s.x.col(static_cast<Eigen::Index>(i)) = t.values.col(xc[i]);
  for (std::size_t i = 0; i < yc.size(); ++i) s.y.col(static_cast<Eigen::Index>(i)) = t.values.col(yc[i]);
  s.validate();
  return s;
}

void write_observation_csv(const fs::path& path, const ObservationSet& set) {
  std::vector<std::string> header = default_names("x_", set.x.cols());
  const auto ys = default_names("y_", set.y.cols());
  header.insert(header.end(), ys.begin(), ys.end());
  Eigen::MatrixXd v(set.size(), set.x.cols() + set.y.cols());
  v << set.x, set.y;
  write_csv(path, header, v);
}

fs::path save_surrogate(const SurrogatePosterior& post, const fs::path& dir, const std::string& stem) {
  post.validate();
  const fs::path draws_path = dir / (stem + "_draws.csv");
  std::vector<std::string> header;
  for (Eigen::Index k = 0; k < post.n_coefficients(); ++k) header.push_back("c_" + std::to_string(k));
  header.emplace_back("sigma");
  write_csv(draws_path, header, post.draws);

  json j;
  j["format"] = "uasabi-surrogate/1";
  j["x_dim"] = post.x_dim;
  j["basis"] = detail::basis_to_json(post.basis);
  j["index_set"] = detail::index_set_to_json(post.index_set);
  json prior;
  prior["coef_prior"] = detail::dist_to_json(post.prior.coef_prior);
  prior["sigma_prior"] = detail::dist_to_json(post.prior.sigma_prior);
  prior["fixed_sigma"] = post.prior.fixed_sigma ? json(*post.prior.fixed_sigma) : json(nullptr);
  j["prior"] = prior;
  const auto& p = post.provenance;
  json prov;
  prov["seed"] = p.seed;
  prov["mcmc"] = detail::mcmc_to_json(p.mcmc);
  prov["data_digest"] = hex64(p.data_digest);
  prov["n_train"] = p.n_train;
  prov["rhat"] = detail::vec_to_json(p.rhat);
  prov["ess"] = detail::vec_to_json(p.ess);
  prov["accept_rate"] = detail::vec_to_json(p.accept_rate);
  prov["design_condition"] = p.design_condition;
  prov["warnings"] = p.warnings;
  j["provenance"] = prov;
  json dr;
  dr["file"] = draws_path.filename().string();
  dr["digest"] = file_digest(draws_path);
  dr["rows"] = post.n_draws();
  j["draws"] = dr;
  const fs::path manifest = dir / (stem + ".json");
  write_text(manifest, dump(j));
  return manifest;
}

SurrogatePosterior load_surrogate(const fs::path& manifest) {
  const std::string where = manifest.string();
  const json j = parse_json(read_text(manifest), where);
  ObjectReader r(j, where);
  std::string format;
  r.get("format", format);
  if (format != "uasabi-surrogate/1") throw SchemaError(where + ": not a surrogate manifest");
  SurrogatePosterior post;
  r.get("x_dim", post.x_dim);
  post.basis = detail::basis_from_json(r.at("basis"), where + ".basis");
  post.index_set = detail::index_set_from_json(r.at("index_set"), where + ".index_set");
  {
    ObjectReader pr(r.at("prior"), where + ".prior");
    post.prior.coef_prior = detail::dist_from_json(pr.at("coef_prior"), where + ".prior.coef_prior");
    post.prior.sigma_prior = detail::dist_from_json(pr.at("sigma_prior"), where + ".prior.sigma_prior");
    const json& fixed = pr.at("fixed_sigma");
    if (!fixed.is_null()) post.prior.fixed_sigma = fixed.get<double>();
    pr.finish();
  }
  {
    ObjectReader pr(r.at("provenance"), where + ".provenance");
    auto& p = post.provenance;
    pr.get("seed", p.seed);
    p.mcmc = detail::mcmc_from_json(pr.at("mcmc"), where + ".provenance.mcmc");
    std::string digest;
    pr.get("data_digest", digest);
    p.data_digest = std::stoull(digest.empty() ? "0" : digest, nullptr, 16);
    pr.get("n_train", p.n_train);
    p.rhat = detail::vec_from_json(pr.at("rhat"), where + ".rhat");
    p.ess = detail::vec_from_json(pr.at("ess"), where + ".ess");
    p.accept_rate = detail::vec_from_json(pr.at("accept_rate"), where + ".accept_rate");
    pr.get("design_condition", p.design_condition);
    pr.get("warnings", p.warnings);
    pr.finish();
  }
  ObjectReader dr(r.at("draws"), where + ".draws");
  std::string file, digest;
  Eigen::Index rows = 0;
  dr.get("file", file);
  dr.get("digest", digest);
  dr.get("rows", rows);
  dr.finish();
  r.finish();
  const fs::path draws_path = manifest.parent_path() / file;
  if (file_digest(draws_path) != digest)
    throw IoError(draws_path.string() + ": digest does not match the surrogate manifest");
  const CsvTable t = read_csv(draws_path);
  if (t.values.rows() != rows) throw SchemaError(draws_path.string() + ": row count mismatch");
  const auto k = static_cast<Eigen::Index>(post.index_set.size());
  if (t.values.cols() != k + 1 || t.header.back() != "sigma")
    throw SchemaError(draws_path.string() + ": expected columns c_0..c_" + std::to_string(k - 1) + ",sigma");
  post.draws = t.values;
  post.validate();
  return post;
}

std::string npe_to_json(const NpeModel& m) {
  const auto& s = m.spec;
  json j;
  j["format"] = "uasabi-npe/1";
  j["x_dim"] = s.x_dim;
  j["y_dim"] = s.y_dim;
  j["param_dim"] = s.param_dim;
  json ds;
  ds["element_net"] = mlp_to_json(s.deepset.element_net, m.element_weights());
  ds["post_net"] = mlp_to_json(s.deepset.post_net, m.post_weights());
  j["deepset"] = ds;
  json fl;
  fl["param_dim"] = s.flow.param_dim;
  fl["augmented_dim"] = s.flow.augmented_dim;
  fl["n_blocks"] = s.flow.n_blocks;
  fl["summary_dim"] = s.flow.summary_dim;
  fl["hidden"] = s.flow.hidden;
  fl["activation"] = to_string(s.flow.activation);
  fl["clamp"] = s.flow.clamp;
  json blocks = json::array();
  const auto fw = m.flow_weights();
  for (int k = 0; k < s.flow.n_blocks; ++k) {
    const MlpSpec net = s.flow.block_net(k);
    blocks.push_back(mlp_to_json(net, fw.segment(s.flow.block_offset(k), net.n_params())));
  }
  fl["blocks"] = blocks;
  j["flow"] = fl;
  json st;
  st["x_mean"] = detail::vec_to_json(m.stats.x_mean);
  st["x_sd"] = detail::vec_to_json(m.stats.x_sd);
  st["y_mean"] = detail::vec_to_json(m.stats.y_mean);
  st["y_sd"] = detail::vec_to_json(m.stats.y_sd);
  st["omega_mean"] = detail::vec_to_json(m.stats.omega_mean);
  st["omega_sd"] = detail::vec_to_json(m.stats.omega_sd);
  j["standardization"] = st;
  const auto& p = m.provenance;
  json pv;
  pv["mode"] = p.mode;
  pv["seed"] = p.seed;
  pv["epochs"] = p.epochs;
  pv["batches_per_epoch"] = p.batches_per_epoch;
  pv["batch_size"] = p.batch_size;
  pv["learning_rate"] = p.learning_rate;
  pv["lr_alpha"] = p.lr_alpha;
  pv["observations_per_set"] = p.observations_per_set;
  j["provenance"] = pv;
  return dump(j);
}

NpeModel npe_from_json(const std::string& text) {
  const std::string where = "npe manifest";
  const json j = parse_json(text, where);
  ObjectReader r(j, where);
  std::string format;
  r.get("format", format);
  if (format != "uasabi-npe/1") throw SchemaError(where + ": unsupported format '" + format + "'");
  NpeModel m;
  auto& s = m.spec;
  r.get("x_dim", s.x_dim);
  r.get("y_dim", s.y_dim);
  r.get("param_dim", s.param_dim);
  ObjectReader dr(r.at("deepset"), where + ".deepset");
  const json& ej = dr.at("element_net");
  const json& pj = dr.at("post_net");
  dr.finish();
  s.deepset.element_net = mlp_spec_from_json(ej, where + ".deepset.element_net");
  s.deepset.post_net = mlp_spec_from_json(pj, where + ".deepset.post_net");
  if (s.deepset.element_net.in() != s.x_dim + s.y_dim)
    throw SchemaError(where + ": element network input width does not match x_dim + y_dim");
  if (s.deepset.post_net.in() != s.deepset.element_net.out())
    throw SchemaError(where + ": post network input does not match element network output");

  ObjectReader fr(r.at("flow"), where + ".flow");
  int augmented = 0, blocks_n = 0, summary = 0;
  double clamp = 0.0;
  std::vector<int> hidden;
  std::string activation;
  int flow_param = 0;
  fr.get("param_dim", flow_param);
  fr.get("augmented_dim", augmented);
  fr.get("n_blocks", blocks_n);
  fr.get("summary_dim", summary);
  fr.get("hidden", hidden);
  fr.get("activation", activation);
  fr.get("clamp", clamp);
  const json& blocks = fr.at("blocks");
  fr.finish();
  try {
    s.flow = CouplingFlowSpec::make(s.param_dim, summary, blocks_n, hidden, clamp);
    s.flow.activation = activation_from_string(activation);
  } catch (const InvalidParameter& e) {
    throw SchemaError(where + ".flow: " + e.what());
  }
  if (flow_param != s.param_dim || augmented != s.flow.augmented_dim ||
      summary != s.deepset.summary_dim())
    throw SchemaError(where + ".flow: dimensions inconsistent with the summary network");
  if (!blocks.is_array() || static_cast<int>(blocks.size()) != blocks_n)
    throw SchemaError(where + ".flow.blocks: expected " + std::to_string(blocks_n) + " blocks");

  m.weights = Eigen::VectorXd::Zero(s.n_params());
  const Eigen::Index ne = s.deepset.element_net.n_params();
  const Eigen::Index np = s.deepset.post_net.n_params();
  mlp_weights_from_json(ej, s.deepset.element_net, m.weights.segment(0, ne), where + ".deepset.element_net");
  mlp_weights_from_json(pj, s.deepset.post_net, m.weights.segment(ne, np), where + ".deepset.post_net");
  for (int k = 0; k < blocks_n; ++k) {
    const MlpSpec net = s.flow.block_net(k);
    const std::string p = where + ".flow.blocks[" + std::to_string(k) + "]";
    if (mlp_spec_from_json(blocks[static_cast<std::size_t>(k)], p) != net)
      throw SchemaError(p + ": widths do not match the flow layout");
    mlp_weights_from_json(blocks[static_cast<std::size_t>(k)], net,
                          m.weights.segment(ne + np + s.flow.block_offset(k), net.n_params()), p);
  }

  ObjectReader sr(r.at("standardization"), where + ".standardization");
  auto vec = [&](const char* key, Eigen::VectorXd& out, Eigen::Index n) {
    out = detail::vec_from_json(sr.at(key), where + ".standardization." + key);
    if (out.size() != n) throw SchemaError(where + ".standardization." + key + ": wrong length");
  };
  vec("x_mean", m.stats.x_mean, s.x_dim);
  vec("x_sd", m.stats.x_sd, s.x_dim);
  vec("y_mean", m.stats.y_mean, s.y_dim);
  vec("y_sd", m.stats.y_sd, s.y_dim);
  vec("omega_mean", m.stats.omega_mean, s.param_dim);
  vec("omega_sd", m.stats.omega_sd, s.param_dim);
  sr.finish();
  for (const auto* sd : {&m.stats.x_sd, &m.stats.y_sd, &m.stats.omega_sd})
    if (!(sd->array() > 0.0).all()) throw SchemaError(where + ": standardization sd must be > 0");

  ObjectReader pr(r.at("provenance"), where + ".provenance");
  auto& p = m.provenance;
  pr.get("mode", p.mode);
  pr.get("seed", p.seed);
  pr.get("epochs", p.epochs);
  pr.get("batches_per_epoch", p.batches_per_epoch);
  pr.get("batch_size", p.batch_size);
  pr.get("learning_rate", p.learning_rate);
  pr.get("lr_alpha", p.lr_alpha);
  pr.get("observations_per_set", p.observations_per_set);
  pr.finish();
  r.finish();
  return m;
}

void save_npe(const NpeModel& model, const fs::path& path) { write_text(path, npe_to_json(model)); }

NpeModel load_npe(const fs::path& path) { return npe_from_json(read_text(path)); }

void write_rank_csv(const fs::path& path, const RankExperiment& e, const std::vector<std::string>& names) {
  e.validate();
  if (static_cast<int>(names.size()) != e.n_params())
    throw DimensionMismatch("rank csv: one name per parameter required");
  std::string out = "replication,parameter,truth,rank,L\n";
  for (int i = 0; i < e.n_replications(); ++i)
    for (int p = 0; p < e.n_params(); ++p)
      out += std::to_string(i) + "," + names[static_cast<std::size_t>(p)] + "," +
             format_double(e.truths(i, p)) + "," +
             std::to_string(e.ranks[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)]) + "," +
             std::to_string(e.L) + "\n";
  write_text(path, out);
}

RankExperiment read_rank_csv(const fs::path& path, const std::string& method) {
  const auto lines = lines_of(read_text(path));
  if (lines.empty() || lines[0] != "replication,parameter,truth,rank,L")
    throw SchemaError(path.string() + ": expected header replication,parameter,truth,rank,L");
  std::vector<std::string> params;
  std::map<std::pair<int, int>, std::pair<double, int>> cells;
  int max_rep = -1, L = -1;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = split(lines[r], ',');
    const std::string ctx = path.string() + ": row " + std::to_string(r);
    if (f.size() != 5) throw SchemaError(ctx + ": expected 5 fields");
    const int rep = static_cast<int>(parse_double(f[0], ctx));
    auto it = std::find(params.begin(), params.end(), f[1]);
    if (it == params.end()) {
      params.push_back(f[1]);
      it = params.end() - 1;
    }
    const int p = static_cast<int>(it - params.begin());
    const int l = static_cast<int>(parse_double(f[4], ctx));
    if (L >= 0 && l != L) throw SchemaError(ctx + ": inconsistent L");
    L = l;
    cells[{rep, p}] = {parse_double(f[2], ctx), static_cast<int>(parse_double(f[3], ctx))};
    max_rep = std::max(max_rep, rep);
  }
  RankExperiment e;
  e.method = method;
  e.L = L;
  const int n = max_rep + 1;
  e.truths.resize(n, static_cast<Eigen::Index>(params.size()));
  e.ranks.assign(params.size(), std::vector<int>(static_cast<std::size_t>(n), 0));
  if (cells.size() != static_cast<std::size_t>(n) * params.size())
    throw SchemaError(path.string() + ": incomplete rank table");
  for (const auto& [key, val] : cells) {
    e.truths(key.first, key.second) = val.first;
    e.ranks[static_cast<std::size_t>(key.second)][static_cast<std::size_t>(key.first)] = val.second;
  }
  e.validate();
  return e;
}

void write_verdict_json(const fs::path& path, const std::string& method, const std::vector<std::string>& names,
                        const std::vector<EcdfDifference>& curves) {
  if (names.size() != curves.size()) throw DimensionMismatch("verdict: one name per curve required");
  json j;
  j["method"] = method;
  json params = json::array();
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    json p;
    p["parameter"] = names[i];
    p["n_ranks"] = c.band.n_ranks;
    p["L"] = c.band.L;
    p["level"] = c.band.level;
    p["half_width"] = c.band.half_width;
    p["max_excess"] = c.max_excess;
    p["inside"] = c.inside;
    params.push_back(p);
  }
  j["parameters"] = params;
  write_text(path, dump(j));
}

std::vector<VerdictRecord> read_verdict_json(const fs::path& path) {
  const json j = parse_json(read_text(path), path.string());
  std::vector<VerdictRecord> out;
  try {
    for (const auto& p : j.at("parameters")) {
      VerdictRecord v;
      v.method = j.at("method").get<std::string>();
      v.parameter = p.at("parameter").get<std::string>();
      v.n_ranks = p.at("n_ranks").get<int>();
      v.L = p.at("L").get<int>();
      v.level = p.at("level").get<double>();
      v.half_width = p.at("half_width").get<double>();
      v.inside = p.at("inside").get<bool>();
      out.push_back(v);
    }
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(path.string() + ": malformed verdict file");
  }
  return out;
}

void write_recovery_csv(const fs::path& path, const std::vector<RecoverySummary>& per_param,
                        const std::vector<std::string>& names) {
  if (names.size() != per_param.size()) throw DimensionMismatch("recovery csv: one name per parameter");
  std::string out = "replication,parameter,truth,median,deviation\n";
  const Eigen::Index n = per_param.empty() ? 0 : per_param[0].truth.size();
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t p = 0; p < per_param.size(); ++p)
      out += std::to_string(i) + "," + names[p] + "," + format_double(per_param[p].truth(i)) + "," +
             format_double(per_param[p].median(i)) + "," + format_double(per_param[p].deviation(i)) + "\n";
  write_text(path, out);
}

std::vector<RecoverySummary> read_recovery_csv(const fs::path& path, std::vector<std::string>& names) {
  const auto lines = lines_of(read_text(path));
  if (lines.empty() || lines[0] != "replication,parameter,truth,median,deviation")
    throw SchemaError(path.string() + ": expected header replication,parameter,truth,median,deviation");
  names.clear();
  std::vector<std::vector<std::array<double, 3>>> cols;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = split(lines[r], ',');
    const std::string ctx = path.string() + ": row " + std::to_string(r);
    if (f.size() != 5) throw SchemaError(ctx + ": expected 5 fields");
    auto it = std::find(names.begin(), names.end(), f[1]);
    if (it == names.end()) {
      names.push_back(f[1]);
      cols.emplace_back();
      it = names.end() - 1;
    }
    auto& col = cols[static_cast<std::size_t>(it - names.begin())];
    if (parse_double(f[0], ctx) != static_cast<double>(col.size()))
      throw SchemaError(ctx + ": replications out of order");
    col.push_back({parse_double(f[2], ctx), parse_double(f[3], ctx), parse_double(f[4], ctx)});
  }
  std::vector<RecoverySummary> out;
  for (const auto& col : cols) {
    RecoverySummary s;
    const auto n = static_cast<Eigen::Index>(col.size());
    s.truth.resize(n);
    s.median.resize(n);
    s.deviation.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      s.truth(i) = col[static_cast<std::size_t>(i)][0];
      s.median(i) = col[static_cast<std::size_t>(i)][1];
      s.deviation(i) = col[static_cast<std::size_t>(i)][2];
    }
    out.push_back(std::move(s));
  }
  return out;
}

void ExperimentManifest::add_artifact(const std::string& name, const fs::path& dir, const fs::path& file) {
  artifacts.push_back({name, fs::relative(file, dir).generic_string(), file_digest(file)});
}

void write_manifest(const fs::path& path, const ExperimentManifest& m) {
  json j;
  j["format"] = "uasabi-experiment/1";
  j["study"] = m.study;
  j["seed"] = m.seed;
  j["workers"] = m.workers;
  j["observation_design"] = m.observation_design;
  j["config"] = m.config_json.empty() ? json(nullptr) : json::parse(m.config_json);
  j["generator_modes"] = m.generator_modes;
  j["completed_phases"] = m.completed_phases;
  json phases = json::array();
  for (const auto& p : m.phases) phases.push_back(json{{"phase", p.phase}, {"seconds", p.seconds}});
  j["phases"] = phases;
  j["total_seconds"] = m.total_seconds;
  json arts = json::array();
  for (const auto& a : m.artifacts) arts.push_back(json{{"name", a.name}, {"path", a.path}, {"digest", a.digest}});
  j["artifacts"] = arts;
  j["warnings"] = m.warnings;
  write_text(path, dump(j));
}

ExperimentManifest read_manifest(const fs::path& path) {
  const json j = parse_json(read_text(path), path.string());
  ExperimentManifest m;
  try {
    if (j.at("format").get<std::string>() != "uasabi-experiment/1")
      throw SchemaError(path.string() + ": not an experiment manifest");
    m.study = j.at("study").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.workers = j.at("workers").get<int>();
    m.observation_design = j.at("observation_design").get<std::string>();
    if (!j.at("config").is_null()) m.config_json = j.at("config").dump();
    m.generator_modes = j.at("generator_modes").get<std::vector<std::string>>();
    m.completed_phases = j.at("completed_phases").get<std::vector<std::string>>();
    for (const auto& p : j.at("phases")) m.phases.push_back({p.at("phase").get<std::string>(), p.at("seconds").get<double>()});
    m.total_seconds = j.at("total_seconds").get<double>();
    for (const auto& a : j.at("artifacts"))
      m.artifacts.push_back({a.at("name").get<std::string>(), a.at("path").get<std::string>(),
                             a.at("digest").get<std::string>()});
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": malformed experiment manifest (" + e.what() + ")");
  }
  return m;
}

void verify_manifest(const fs::path& path) {
  const ExperimentManifest m = read_manifest(path);
  for (const auto& a : m.artifacts) {
    const fs::path file = path.parent_path() / a.path;
    if (!fs::exists(file)) throw IoError("artifact '" + a.name + "' missing: " + file.string());
    if (file_digest(file) != a.digest)
      throw IoError("artifact '" + a.name + "' does not match its recorded digest: " + file.string());
  }
}

}  // namespace uasabi
