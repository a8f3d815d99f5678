#include "ugmcs/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <span>

#include <nlohmann/json.hpp>

#include "ugmcs/errors.hpp"
#include "ugmcs/rng.hpp"

namespace ugmcs {

using nlohmann::json;

const char* to_string(FilterKind k) {
  return k == FilterKind::Gabor ? "gabor" : "otsu";
}

FilterKind filter_kind_from_string(const std::string& s) {
  if (s == "gabor") return FilterKind::Gabor;
  if (s == "otsu") return FilterKind::Otsu;
  throw invalid_input("unknown filter kind '" + s + "' (expected gabor or otsu)");
}

void NetConfig::validate() const {
  if (depth < 1) throw invalid_input("net.depth must be >= 1");
  if (base_channels < 1) throw invalid_input("net.base_channels must be >= 1");
  if (attention_channels < 1) throw invalid_input("net.attention_channels must be >= 1");
  if (input_size < 1) throw invalid_input("net.input_size must be >= 1");
  if (input_size % (1 << depth) != 0)
    throw invalid_input("net.input_size must be divisible by 2^depth");
  if (otsu_bins < 2) throw invalid_input("net.otsu_bins must be >= 2");
  if (gabor.orientations < 1) throw invalid_input("net.gabor.orientations must be >= 1");
  if (!(gabor.wavelength > 0.0)) throw invalid_input("net.gabor.wavelength must be > 0");
  if (!(gabor.sigma > 0.0)) throw invalid_input("net.gabor.sigma must be > 0");
  if (gabor.kernel_size < 1 || gabor.kernel_size % 2 == 0)
    throw invalid_input("net.gabor.kernel_size must be odd and positive");
}

// ---- NetState ---------------------------------------------------------------

Tensor& NetState::add(const std::string& name, Tensor t) {
  if (index_.count(name))
    throw invalid_input("NetState: duplicate parameter " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

bool NetState::contains(const std::string& name) const { return index_.count(name) > 0; }

std::size_t NetState::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw data_error("NetState: unknown parameter " + name);
  return it->second;
}

Tensor& NetState::at(const std::string& name) {
  return entries_[index_of(name)].second;
}

const Tensor& NetState::at(const std::string& name) const {
  return entries_[index_of(name)].second;
}

std::size_t NetState::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.data.size();
  return n;
}

// ---- parameter binding -------------------------------------------------------

namespace {

void require_finite_state(const NetState& state) {
  for (const auto& [name, t] : state.entries())
    for (double v : t.data)
      if (!std::isfinite(v))
        throw numeric_fault("non-finite parameter in " + name);
}

struct ParamCtx {
  ad::Tape& tape;
  NetState* init_state = nullptr;      // init mode when non-null
  const NetState* use_state = nullptr; // use mode when non-null
  Rng* rng = nullptr;
  bool requires_grad = false;
  BoundState* bound = nullptr;
  std::map<std::string, ad::Value> cache;

  // fan_in > 0: uniform(+-sqrt(6/fan_in)); fan_in == 0: zeros; fan_in < 0: ones.
  ad::Value get(const std::string& name, const std::vector<int>& shape, int fan_in) {
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;

    const Tensor* src = nullptr;
    if (init_state) {
      if (!init_state->contains(name)) {
        Tensor t(shape);
        if (fan_in > 0) {
          const double bound_v = std::sqrt(6.0 / fan_in);
          for (double& v : t.data) v = rng->uniform(-bound_v, bound_v);
        } else if (fan_in < 0) {
          t.fill(1.0);
        }
        init_state->add(name, std::move(t));
      }
      src = &init_state->at(name);
    } else {
      src = &use_state->at(name);
    }
    if (src->shape != shape)
      throw data_error("parameter " + name + " has mismatched shape for this config");

    ad::Value leaf = tape.leaf(*src, requires_grad);
    if (bound && use_state)
      bound->leaves[use_state->index_of(name)] = leaf;
    cache.emplace(name, leaf);
    return leaf;
  }
};

ad::Value conv_p(ParamCtx& P, const std::string& name, ad::Value x, int co, int k, int pad) {
  const int ci = x->value.dim(0);
  ad::Value w = P.get(name + ".w", {co, ci, k, k}, ci * k * k);
  ad::Value b = P.get(name + ".b", {co}, 0);
  return P.tape.conv2d(x, w, b, pad);
}

ad::Value norm_p(ParamCtx& P, const std::string& name, ad::Value x) {
  const int c = x->value.dim(0);
  ad::Value g = P.get(name + ".gamma", {c}, -1);
  ad::Value b = P.get(name + ".beta", {c}, 0);
  return P.tape.instance_norm(x, g, b);
}

ad::Value conv_block(ParamCtx& P, const std::string& name, ad::Value x, int co) {
  x = P.tape.relu(norm_p(P, name + ".norm0", conv_p(P, name + ".conv0", x, co, 3, 1)));
  x = P.tape.relu(norm_p(P, name + ".norm1", conv_p(P, name + ".conv1", x, co, 3, 1)));
  return x;
}

// Additive attention gate: psi = sigmoid(conv(relu(Wg g + Wx x))) applied to
// the skip path.
ad::Value attention_gate(ParamCtx& P, const NetConfig& cfg, const std::string& name,
                         ad::Value skip, ad::Value gate) {
  ad::Value g1 = conv_p(P, name + ".wg", gate, cfg.attention_channels, 1, 0);
  ad::Value x1 = conv_p(P, name + ".wx", skip, cfg.attention_channels, 1, 0);
  ad::Value a = P.tape.relu(P.tape.add(g1, x1));
  ad::Value psi = P.tape.sigmoid(conv_p(P, name + ".psi", a, 1, 1, 0));
  return P.tape.mul_spatial(skip, psi);
}

// Prediction head: 3x3 conv (32->32) + relu + 3x3 conv (32->1) + sigmoid.
ad::Value head_p(ParamCtx& P, const std::string& name, ad::Value x) {
  ad::Value h = P.tape.relu(conv_p(P, name + ".conv0", x, 32, 3, 1));
  return P.tape.sigmoid(conv_p(P, name + ".conv1", h, 1, 3, 1));
}

ad::Value fem_graph(ParamCtx& P, const NetConfig& cfg, ad::Value x) {
  std::vector<ad::Value> enc;
  ad::Value cur = x;
  for (int l = 0; l <= cfg.depth; ++l) {
    if (l > 0) cur = P.tape.maxpool2(cur);
    cur = conv_block(P, "fem.enc" + std::to_string(l), cur, cfg.base_channels << l);
    enc.push_back(cur);
  }
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const std::string dec = "fem.dec" + std::to_string(l);
    ad::Value u = P.tape.upsample2_nearest(cur);
    u = conv_p(P, dec + ".up", u, cfg.base_channels << l, 1, 0);
    ad::Value skip = enc[l];
    if (cfg.attention_gates)
      skip = attention_gate(P, cfg, dec + ".att", skip, u);
    cur = conv_block(P, dec, P.tape.concat_channels({u, skip}), cfg.base_channels << l);
  }
  return conv_p(P, "fem.out", cur, 32, 1, 0);
}

struct UamGraph {
  ad::Value r_lc, r_hc, r_uni, union_pred, inter_pred, x_uni;
};

UamGraph uam_graph(ParamCtx& P, ad::Value r) {
  UamGraph u;
  u.r_lc = conv_p(P, "uam.branch_lc", r, 32, 1, 0);
  u.r_hc = conv_p(P, "uam.branch_hc", r, 32, 1, 0);
  u.r_uni = conv_p(P, "uam.branch_uni", r, 32, 1, 0);
  u.union_pred = head_p(P, "uam.head_union", u.r_lc);
  u.inter_pred = head_p(P, "uam.head_inter", u.r_hc);
  u.x_uni = head_p(P, "uam.head_uni", u.r_uni);
  return u;
}

std::vector<std::uint8_t> otsu_keep(const Tensor& a, int bins) {
  const int c_n = a.dim(0);
  const std::size_t plane = a.data.size() / c_n;
  std::vector<std::uint8_t> keep(a.data.size());
  for (int c = 0; c < c_n; ++c) {
    const std::span<const double> ch(&a.data[c * plane], plane);
    const double t = otsu_threshold(ch, bins);
    for (std::size_t i = 0; i < plane; ++i)
      keep[c * plane + i] = a.data[c * plane + i] >= t ? 1 : 0;
  }
  return keep;
}

ad::Value faab_graph(ParamCtx& P, const NetConfig& cfg, const std::string& branch,
                     ad::Value r_z, FilterKind kind) {
  const std::string name = "iucm.faab_" + branch;
  ad::Value q = conv_p(P, name + ".q", r_z, cfg.attention_channels, 1, 0);
  ad::Value k = conv_p(P, name + ".k", r_z, cfg.attention_channels, 1, 0);
  ad::Value v = conv_p(P, name + ".v", r_z, 32, 1, 0);
  ad::Value a = P.tape.spatial_attention(q, k, v);
  ad::Value f;
  if (kind == FilterKind::Gabor) {
    f = P.tape.fixed_depthwise_conv(a, gabor_mean_kernel(cfg.gabor));
  } else {
    // Threshold selection is piecewise-constant; gradients flow only through
    // the surviving activations.
    f = P.tape.hard_gate(a, otsu_keep(a->value, cfg.otsu_bins));
  }
  return P.tape.add(r_z, f);
}

struct IucmGraph {
  ad::Value x_s, s_uni, s_lc, s_hc;
};

IucmGraph iucm_graph(ParamCtx& P, const NetConfig& cfg, ad::Value r,
                     ad::Value r_lc, ad::Value r_hc, ad::Value r_uni) {
  ad::Value rp_lc = faab_graph(P, cfg, "lc", r_lc, cfg.filter_lc);
  ad::Value rp_hc = faab_graph(P, cfg, "hc", r_hc, cfg.filter_hc);
  ad::Value rp_uni = faab_graph(P, cfg, "uni", r_uni, cfg.filter_uni);

  IucmGraph g;
  g.s_uni = P.tape.cosine_flat(rp_uni, r);
  g.s_lc = P.tape.cosine_flat(rp_lc, r);
  g.s_hc = P.tape.cosine_flat(rp_hc, r);

  ad::Value r_aug = P.tape.concat_channels({
      P.tape.scalar_mul(g.s_uni, rp_uni),
      P.tape.scalar_mul(g.s_lc, rp_lc),
      P.tape.scalar_mul(g.s_hc, rp_hc),
  });
  ad::Value r_final = P.tape.concat_channels({r, r_aug});
  g.x_s = P.tape.sigmoid(conv_p(P, "iucm.out", r_final, 1, 3, 1));
  return g;
}

void check_image(const NetConfig& cfg, const Tensor& image) {
  if (image.shape.size() != 3 || image.dim(0) != 3)
    throw invalid_input("net input must be {3,S,S}");
  const int s = image.dim(1);
  if (image.dim(2) != s)
    throw invalid_input("net input must be square");
  if (s % (1 << cfg.depth) != 0)
    throw invalid_input("net input size must be divisible by 2^depth");
}

ForwardGraph build_graph(ParamCtx& P, const NetConfig& cfg, const Tensor& image) {
  check_image(cfg, image);
  ForwardGraph g;
  ad::Value x = P.tape.constant(image);
  g.r = fem_graph(P, cfg, x);
  if (cfg.use_uam) {
    UamGraph u = uam_graph(P, g.r);
    g.r_lc = u.r_lc;
    g.r_hc = u.r_hc;
    g.r_uni = u.r_uni;
    g.union_pred = u.union_pred;
    g.inter_pred = u.inter_pred;
    g.x_uni = u.x_uni;
    if (cfg.use_iucm) {
      IucmGraph i = iucm_graph(P, cfg, g.r, u.r_lc, u.r_hc, u.r_uni);
      g.x_s = i.x_s;
      g.s_uni = i.s_uni;
      g.s_lc = i.s_lc;
      g.s_hc = i.s_hc;
    } else {
      g.x_s = head_p(P, "head_s", g.r);
    }
  } else {
    g.x_s = head_p(P, "head_s", g.r);
  }
  return g;
}

Grid plane_to_grid(const Tensor& t) {
  Grid g(t.dim(1), t.dim(2));
  for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = t.data[i];
  return g;
}

} // namespace

NetState init_net_state(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NetState state;
  Rng rng(seed);
  const int s = 1 << cfg.depth; // smallest valid input; weights are size-free
  const Tensor dummy({3, s, s});

  NetConfig full = cfg;
  full.use_uam = full.use_iucm = full.attention_gates = true;
  {
    ad::Tape tape;
    ParamCtx P{tape, &state, nullptr, &rng, false, nullptr, {}};
    build_graph(P, full, dummy);
  }
  NetConfig alt = full;
  alt.use_iucm = false; // reaches the fallback segmentation head
  {
    ad::Tape tape;
    ParamCtx P{tape, &state, nullptr, &rng, false, nullptr, {}};
    build_graph(P, alt, dummy);
  }
  return state;
}

ForwardGraph net_forward_graph(ad::Tape& tape, const NetConfig& cfg,
                               const NetState& state, const Tensor& image,
                               bool requires_grad, BoundState* bound) {
  cfg.validate();
  if (bound)
    bound->leaves.assign(state.entries().size(), nullptr);
  ParamCtx P{tape, nullptr, &state, nullptr, requires_grad, bound, {}};
  return build_graph(P, cfg, image);
}

ForwardOutputs net_forward(const NetConfig& cfg, const NetState& state,
                           const Tensor& image) {
  require_finite_state(state);
  ad::Tape tape;
  const ForwardGraph g = net_forward_graph(tape, cfg, state, image, false);

  ForwardOutputs out;
  out.r = g.r->value;
  out.x_s = g.x_s->value;
  if (g.r_lc) {
    out.r_lc = g.r_lc->value;
    out.r_hc = g.r_hc->value;
    out.r_uni = g.r_uni->value;
    out.union_pred = g.union_pred->value;
    out.inter_pred = g.inter_pred->value;
    out.x_uni = g.x_uni->value;
    out.mcm = compose_mcm(plane_to_grid(*out.union_pred), plane_to_grid(*out.inter_pred));
  }
  if (g.s_uni) {
    out.s_uni = g.s_uni->value.data[0];
    out.s_lc = g.s_lc->value.data[0];
    out.s_hc = g.s_hc->value.data[0];
  }
  return out;
}

Tensor fem_forward(const NetState& state, const NetConfig& cfg, const Tensor& image) {
  cfg.validate();
  require_finite_state(state);
  check_image(cfg, image);
  ad::Tape tape;
  ParamCtx P{tape, nullptr, &state, nullptr, false, nullptr, {}};
  ad::Value x = tape.constant(image);
  return fem_graph(P, cfg, x)->value;
}

UamOutputs uam_forward(const NetState& state, const NetConfig& cfg, const Tensor& r) {
  cfg.validate();
  require_finite_state(state);
  if (r.shape.size() != 3 || r.dim(0) != 32)
    throw invalid_input("uam_forward: r must be {32,H,W}");
  ad::Tape tape;
  ParamCtx P{tape, nullptr, &state, nullptr, false, nullptr, {}};
  const UamGraph u = uam_graph(P, tape.constant(r));
  return UamOutputs{u.r_lc->value,       u.r_hc->value,       u.r_uni->value,
                    u.union_pred->value, u.inter_pred->value, u.x_uni->value};
}

Tensor faab_forward(const NetState& state, const NetConfig& cfg, const Tensor& r_z,
                    FilterKind kind, const std::string& branch) {
  cfg.validate();
  require_finite_state(state);
  if (r_z.shape.size() != 3 || r_z.dim(0) != 32)
    throw invalid_input("faab_forward: r_z must be {32,H,W}");
  if (branch != "lc" && branch != "hc" && branch != "uni")
    throw invalid_input("faab_forward: branch must be lc, hc, or uni");
  ad::Tape tape;
  ParamCtx P{tape, nullptr, &state, nullptr, false, nullptr, {}};
  return faab_graph(P, cfg, branch, tape.constant(r_z), kind)->value;
}

IucmOutputs iucm_forward(const NetState& state, const NetConfig& cfg,
                         const Tensor& r, const Tensor& r_lc,
                         const Tensor& r_hc, const Tensor& r_uni) {
  cfg.validate();
  require_finite_state(state);
  for (const Tensor* t : {&r, &r_lc, &r_hc, &r_uni})
    if (t->shape.size() != 3 || t->dim(0) != 32)
      throw invalid_input("iucm_forward: inputs must be {32,H,W}");
  ad::Tape tape;
  ParamCtx P{tape, nullptr, &state, nullptr, false, nullptr, {}};
  const IucmGraph g = iucm_graph(P, cfg, tape.constant(r), tape.constant(r_lc),
                                 tape.constant(r_hc), tape.constant(r_uni));
  return IucmOutputs{g.x_s->value, g.s_uni->value.data[0], g.s_lc->value.data[0],
                     g.s_hc->value.data[0]};
}

// ---- config JSON -------------------------------------------------------------

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw invalid_input("unknown key '" + it.key() + "' in " + where);
  }
}

json net_config_to_json_obj(const NetConfig& c) {
  json g;
  g["orientations"] = c.gabor.orientations;
  g["wavelength"] = c.gabor.wavelength;
  g["sigma"] = c.gabor.sigma;
  g["aspect"] = c.gabor.aspect;
  g["phase"] = c.gabor.phase;
  g["kernel_size"] = c.gabor.kernel_size;

  json j;
  j["depth"] = c.depth;
  j["base_channels"] = c.base_channels;
  j["input_size"] = c.input_size;
  j["attention_channels"] = c.attention_channels;
  j["gabor"] = g;
  j["otsu_bins"] = c.otsu_bins;
  j["use_uam"] = c.use_uam;
  j["use_iucm"] = c.use_iucm;
  j["attention_gates"] = c.attention_gates;
  j["filter_lc"] = to_string(c.filter_lc);
  j["filter_hc"] = to_string(c.filter_hc);
  j["filter_uni"] = to_string(c.filter_uni);
  return j;
}

NetConfig net_config_from_json_obj(const json& j) {
  if (!j.is_object())
    throw invalid_input("net config must be a JSON object");
  reject_unknown_keys(j,
                      {"depth", "base_channels", "input_size", "attention_channels",
                       "gabor", "otsu_bins", "use_uam", "use_iucm", "attention_gates",
                       "filter_lc", "filter_hc", "filter_uni"},
                      "net config");
  NetConfig c;
  try {
    if (j.contains("depth")) c.depth = j["depth"].get<int>();
    if (j.contains("base_channels")) c.base_channels = j["base_channels"].get<int>();
    if (j.contains("input_size")) c.input_size = j["input_size"].get<int>();
    if (j.contains("attention_channels"))
      c.attention_channels = j["attention_channels"].get<int>();
    if (j.contains("otsu_bins")) c.otsu_bins = j["otsu_bins"].get<int>();
    if (j.contains("use_uam")) c.use_uam = j["use_uam"].get<bool>();
    if (j.contains("use_iucm")) c.use_iucm = j["use_iucm"].get<bool>();
    if (j.contains("attention_gates")) c.attention_gates = j["attention_gates"].get<bool>();
    if (j.contains("filter_lc")) c.filter_lc = filter_kind_from_string(j["filter_lc"].get<std::string>());
    if (j.contains("filter_hc")) c.filter_hc = filter_kind_from_string(j["filter_hc"].get<std::string>());
    if (j.contains("filter_uni")) c.filter_uni = filter_kind_from_string(j["filter_uni"].get<std::string>());
    if (j.contains("gabor")) {
      const json& g = j["gabor"];
      reject_unknown_keys(
          g, {"orientations", "wavelength", "sigma", "aspect", "phase", "kernel_size"},
          "net.gabor config");
      if (g.contains("orientations")) c.gabor.orientations = g["orientations"].get<int>();
      if (g.contains("wavelength")) c.gabor.wavelength = g["wavelength"].get<double>();
      if (g.contains("sigma")) c.gabor.sigma = g["sigma"].get<double>();
      if (g.contains("aspect")) c.gabor.aspect = g["aspect"].get<double>();
      if (g.contains("phase")) c.gabor.phase = g["phase"].get<double>();
      if (g.contains("kernel_size")) c.gabor.kernel_size = g["kernel_size"].get<int>();
    }
  } catch (const json::exception& e) {
    throw invalid_input(std::string("net config type error: ") + e.what());
  }
  return c;
}

} // namespace

std::string net_config_to_json(const NetConfig& cfg) {
  return net_config_to_json_obj(cfg).dump();
}

NetConfig net_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw invalid_input(std::string("net config parse error: ") + e.what());
  }
  return net_config_from_json_obj(j);
}

// ---- checkpoints --------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'U', 'G', 'M', 'C', 'S', 'C', 'K', '1'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const NetConfig& cfg,
                     const NetState& state) {
  json header;
  header["format_version"] = kFormatVersion;
  header["config"] = net_config_to_json_obj(cfg);
  header["params"] = json::array();
  for (const auto& [name, t] : state.entries()) {
    json p;
    p["name"] = name;
    p["shape"] = t.shape;
    header["params"].push_back(std::move(p));
  }
  const std::string header_str = header.dump();

  std::string blob;
  blob.reserve(16 + header_str.size() + state.scalar_count() * 8);
  blob.append(kMagic, sizeof(kMagic));
  put_u64_le(blob, header_str.size());
  blob += header_str;
  for (const auto& [name, t] : state.entries())
    for (double v : t.data)
      put_u64_le(blob, std::bit_cast<std::uint64_t>(v));

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw data_error("cannot open checkpoint " + path.string() + " for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out)
    throw data_error("checkpoint write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw data_error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw data_error("not a checkpoint file: " + path.string());
  const std::uint64_t header_len = get_u64_le(bytes.data() + 8);
  if (bytes.size() < 16 + header_len)
    throw data_error("truncated checkpoint header: " + path.string());

  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + header_len);
  } catch (const json::exception& e) {
    throw data_error("checkpoint header parse error in " + path.string() + ": " + e.what());
  }
  if (!header.contains("format_version") ||
      header["format_version"].get<std::uint32_t>() != kFormatVersion)
    throw data_error("unsupported checkpoint format version in " + path.string());

  Checkpoint ck;
  ck.config = net_config_from_json_obj(header.at("config"));

  std::size_t off = 16 + header_len;
  for (const auto& p : header.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const std::vector<int> shape = p.at("shape").get<std::vector<int>>();
    Tensor t(shape);
    const std::size_t n = t.data.size();
    if (off + n * 8 > bytes.size())
      throw data_error("truncated checkpoint data in " + path.string());
    for (std::size_t i = 0; i < n; ++i) {
      t.data[i] = std::bit_cast<double>(get_u64_le(bytes.data() + off));
      off += 8;
    }
    ck.state.add(name, std::move(t));
  }
  if (off != bytes.size())
    throw data_error("trailing bytes in checkpoint " + path.string());
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const NetConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.config == expected))
    throw data_error("checkpoint " + path.string() + " was written with a different config");
  return ck;
}

} // namespace ugmcs
