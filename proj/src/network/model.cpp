#include "mvsa/network/model.hpp"

#include "mvsa/core/conv_gru.hpp"
#include "mvsa/core/init.hpp"
#include "mvsa/network/layout.hpp"

namespace mvsa {

namespace {

std::string view_prefix(int v) { return "view" + std::to_string(v) + "."; }

/// Places parameters on the tape on first use.
template <typename T>
class Binder {
 public:
  Binder(Tape<T>& tape, BasicModel<T>& model) : tape_(tape), model_(model) {}

  Var operator()(const std::string& name) {
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    const Var v = tape_.param(model_.parameter(name));
    vars_.emplace(name, v);
    return v;
  }

 private:
  Tape<T>& tape_;
  BasicModel<T>& model_;
  std::map<std::string, Var> vars_;
};

template <typename T>
BasicTensor<T> select_rows(const BasicTensor<T>& x, std::span<const std::int64_t> rows) {
  Shape s = x.shape();
  const std::int64_t row_len = x.numel() / s[0];
  s[0] = static_cast<std::int64_t>(rows.size());
  BasicTensor<T> y(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.dim(0)) throw ConfigError("batch frame index out of range");
    std::copy(x.data() + rows[i] * row_len, x.data() + (rows[i] + 1) * row_len,
              y.data() + static_cast<std::int64_t>(i) * row_len);
  }
  return y;
}

template <typename T>
Var run_stages(Tape<T>& tape, Binder<T>& bind, const std::string& prefix, Var x, std::span<const Stage> stages) {
  for (const Stage& st : stages) {
    if (st.is_conv) {
      const std::string p = prefix + st.name;
      x = relu(tape, conv2d(tape, x, bind(p + ".kernel"), bind(p + ".bias"), st.stride));
    } else {
      x = maxpool2d(tape, x, st.window, st.stride);
    }
  }
  return x;
}

template <typename T>
Var trunk(Tape<T>& tape, Binder<T>& bind, const std::string& prefix, Var x) {
  x = relu(tape, dense(tape, x, bind(prefix + "fc1.weight"), bind(prefix + "fc1.bias")));
  return relu(tape, dense(tape, x, bind(prefix + "fc2.weight"), bind(prefix + "fc2.bias")));
}

template <typename T>
Var head(Tape<T>& tape, Binder<T>& bind, const std::string& name, Var x) {
  return softmax(tape, dense(tape, x, bind(name + ".weight"), bind(name + ".bias")));
}

std::vector<double> row_of(const auto& t, std::int64_t n) {
  const std::int64_t k = t.dim(1);
  std::vector<double> out(static_cast<std::size_t>(k));
  for (std::int64_t j = 0; j < k; ++j) out[static_cast<std::size_t>(j)] = static_cast<double>(t[n * k + j]);
  return out;
}

}  // namespace

template <typename T>
BasicModel<T>::BasicModel(MvsaConfig config, std::uint64_t seed) : config_(std::move(config)) {
  validate(config_);
  Rng rng(seed);
  const std::int64_t f = config_.filters;
  const std::int64_t fs = state_feature_length(config_);
  const std::int64_t fa = action_feature_length(config_);
  const std::int64_t views = config_.num_views;
  for (int v = 0; v < config_.num_views; ++v) {
    const std::string vp = view_prefix(v);
    std::int64_t cin = config_.channels();
    for (const Stage& st : kStateStages) {
      if (!st.is_conv) continue;
      add_conv(vp + "state." + st.name, st.window.h, st.window.w, cin, f, rng);
      cin = f;
    }
    add_bn(vp + "state.bn", f);
    cin = config_.channels();
    for (const Stage& st : kActionStages) {
      if (!st.is_conv) continue;
      add_conv(vp + "action." + st.name, st.window.h, st.window.w, cin, f, rng);
      cin = f;
    }
    for (int layer = 1; layer <= 2; ++layer) {
      const std::string p = vp + "action.gru" + std::to_string(layer);
      add_param(p + ".input_kernel", fan_in_uniform<T>(Shape{3, 3, f, 3 * f}, 9 * f, rng));
      add_param(p + ".input_bias", BasicTensor<T>(Shape{3 * f}));
      add_param(p + ".recurrent_zr", fan_in_uniform<T>(Shape{3, 3, f, 2 * f}, 9 * f, rng));
      add_param(p + ".recurrent_c", fan_in_uniform<T>(Shape{3, 3, f, f}, 9 * f, rng));
    }
    add_bn(vp + "action.bn", f);
  }
  const std::int64_t action_in_view = fa + (config_.state_action_connection ? fs : 0);
  const std::int64_t action_in_all = views * fa + (config_.state_action_connection ? views * fs : 0);
  if (config_.use_gating) {
    for (int v = 0; v < config_.num_views; ++v) {
      const std::string vp = view_prefix(v);
      add_trunk(vp + "state_cls.", fs, rng);
      for (const auto& h : config_.state_heads) add_dense(vp + "state_cls." + h.name, config_.hidden2, h.width(), rng);
      add_trunk(vp + "action_cls.", action_in_view, rng);
      add_dense(vp + "action_cls.out", config_.hidden2, config_.action_head.width(), rng);
    }
    add_trunk("gate_state.", views * fs, rng);
    add_dense("gate_state.out", config_.hidden2, views, rng);
    add_trunk("gate_action.", action_in_all, rng);
    add_dense("gate_action.out", config_.hidden2, views, rng);
  } else {
    add_trunk("state_cls.", views * fs, rng);
    for (const auto& h : config_.state_heads) add_dense("state_cls." + h.name, config_.hidden2, h.width(), rng);
    add_trunk("action_cls.", action_in_all, rng);
    add_dense("action_cls.out", config_.hidden2, config_.action_head.width(), rng);
  }
}

template <typename T>
void BasicModel<T>::add_param(const std::string& name, BasicTensor<T> value) {
  if (index_.count(name) != 0) throw ConfigError("duplicate parameter " + name);
  index_.emplace(name, params_.size());
  params_.emplace_back(name, std::move(value));
}

template <typename T>
void BasicModel<T>::add_conv(const std::string& prefix, std::int64_t kh, std::int64_t kw, std::int64_t cin,
                             std::int64_t cout, Rng& rng) {
  add_param(prefix + ".kernel", fan_in_uniform<T>(Shape{kh, kw, cin, cout}, kh * kw * cin, rng));
  add_param(prefix + ".bias", BasicTensor<T>(Shape{cout}));
}

template <typename T>
void BasicModel<T>::add_dense(const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng) {
  add_param(prefix + ".weight", fan_in_uniform<T>(Shape{in, out}, in, rng));
  add_param(prefix + ".bias", BasicTensor<T>(Shape{out}));
}

template <typename T>
void BasicModel<T>::add_bn(const std::string& prefix, std::int64_t channels) {
  add_param(prefix + ".gamma", BasicTensor<T>(Shape{channels}, T{1}));
  add_param(prefix + ".beta", BasicTensor<T>(Shape{channels}));
  bn_.emplace(prefix, BatchNormState<T>(channels));
}

template <typename T>
void BasicModel<T>::add_trunk(const std::string& prefix, std::int64_t in, Rng& rng) {
  add_dense(prefix + "fc1", in, config_.hidden1, rng);
  add_dense(prefix + "fc2", config_.hidden1, config_.hidden2, rng);
}

template <typename T>
std::vector<BasicParameter<T>*> BasicModel<T>::parameter_ptrs() {
  std::vector<BasicParameter<T>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
BasicParameter<T>& BasicModel<T>::parameter(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("model has no parameter " + name);
  return params_[it->second];
}

template <typename T>
const BasicParameter<T>& BasicModel<T>::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("model has no parameter " + name);
  return params_[it->second];
}

template <typename T>
template <typename U>
BasicModel<U> BasicModel<T>::cast() const {
  BasicModel<U> out;
  out.config_ = config_;
  out.index_ = index_;
  for (const auto& p : params_) {
    BasicParameter<U> q(p.name, p.value.template cast<U>());
    q.adam_m = p.adam_m.template cast<U>();
    q.adam_v = p.adam_v.template cast<U>();
    q.step_count = p.step_count;
    out.params_.push_back(std::move(q));
  }
  for (const auto& [name, st] : bn_) {
    BatchNormState<U> s;
    s.running_mean = st.running_mean.template cast<U>();
    s.running_var = st.running_var.template cast<U>();
    s.initialized = st.initialized;
    s.momentum = st.momentum;
    s.eps = st.eps;
    out.bn_.emplace(name, std::move(s));
  }
  return out;
}

template <typename T>
ForwardVars BasicModel<T>::forward(Tape<T>& tape, const BatchInput<T>& batch, const ForwardOptions& options) {
  const int views = config_.num_views;
  if (static_cast<int>(batch.frames.size()) != views) {
    throw ConfigError("batch has " + std::to_string(batch.frames.size()) + " views, model expects " +
                      std::to_string(views));
  }
  const std::int64_t n = batch.size();
  if (n < 1 || static_cast<std::int64_t>(batch.window_index.size()) != n) {
    throw ConfigError("batch index tables are inconsistent");
  }
  const Shape frame_shape{config_.height, config_.width, config_.channels()};
  for (const auto& f : batch.frames) {
    if (f.rank() != 4 || Shape(f.shape().begin() + 1, f.shape().end()) != frame_shape) {
      throw ConfigError("batch frames " + shape_str(f.shape()) + " do not match model input " +
                        shape_str(frame_shape));
    }
  }
  Binder<T> bind(tape, *this);
  const BnMode mode = options.mode;
  const std::int64_t f = config_.filters;
  const auto ext = action_branch_extents(config_.height, config_.width);
  const auto g1 = ext[ext.size() - 2];
  const auto g2 = ext.back();

  std::vector<Var> fs(static_cast<std::size_t>(views)), fa(static_cast<std::size_t>(views));
  for (int v = 0; v < views; ++v) {
    const std::string vp = view_prefix(v);
    const auto& frames = batch.frames[static_cast<std::size_t>(v)];

    Var x = tape.constant(select_rows(frames, batch.state_index));
    x = run_stages(tape, bind, vp + "state.", x, kStateStages);
    x = batchnorm(tape, x, bind(vp + "state.bn.gamma"), bind(vp + "state.bn.beta"), bn_.at(vp + "state.bn"), mode);
    fs[static_cast<std::size_t>(v)] = flatten_batch(tape, x);

    Var stem = run_stages(tape, bind, vp + "action.", tape.constant(frames), kActionStages);
    auto gru_vars = [&](int layer) {
      const std::string p = vp + "action.gru" + std::to_string(layer);
      return ConvGruVars{bind(p + ".input_kernel"), bind(p + ".input_bias"), bind(p + ".recurrent_zr"),
                         bind(p + ".recurrent_c")};
    };
    const ConvGruVars w1 = gru_vars(1), w2 = gru_vars(2);
    Var h1 = tape.constant(BasicTensor<T>(Shape{n, g1.first, g1.second, f}));
    Var h2 = tape.constant(BasicTensor<T>(Shape{n, g2.first, g2.second, f}));
    for (int s = 0; s < config_.window; ++s) {
      std::vector<std::int64_t> rows(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = batch.window_index[i][s];
      const Var xs = gather_rows(tape, stem, std::move(rows));
      h1 = conv_gru_step(tape, xs, h1, w1);
      h2 = conv_gru_step(tape, h1, h2, w2);
    }
    h2 = batchnorm(tape, h2, bind(vp + "action.bn.gamma"), bind(vp + "action.bn.beta"), bn_.at(vp + "action.bn"),
                   mode);
    fa[static_cast<std::size_t>(v)] = flatten_batch(tape, h2);
  }

  const bool conn = config_.state_action_connection;
  const Var f_all = views == 1 ? fs[0] : concat(tape, fs, 1);
  std::vector<Var> action_parts = fa;
  if (conn) action_parts.insert(action_parts.end(), fs.begin(), fs.end());
  const Var action_all = action_parts.size() == 1 ? action_parts[0] : concat(tape, action_parts, 1);

  ForwardVars out;
  if (!config_.use_gating) {
    const Var ts = trunk(tape, bind, "state_cls.", f_all);
    for (const auto& h : config_.state_heads) out.head_fused.push_back(head(tape, bind, "state_cls." + h.name, ts));
    out.action_fused = head(tape, bind, "action_cls.out", trunk(tape, bind, "action_cls.", action_all));
    return out;
  }

  auto gating = [&](const std::string& prefix, Var input) {
    if (options.gating_override) {
      const auto& g = *options.gating_override;
      if (static_cast<int>(g.size()) != views) throw ConfigError("gating override has the wrong length");
      BasicTensor<T> t(Shape{n, views});
      for (std::int64_t i = 0; i < n; ++i)
        for (int v = 0; v < views; ++v) t[i * views + v] = static_cast<T>(g[static_cast<std::size_t>(v)]);
      return tape.constant(std::move(t));
    }
    return head(tape, bind, prefix + "out", trunk(tape, bind, prefix, input));
  };

  out.head_per_view.resize(config_.state_heads.size());
  for (int v = 0; v < views; ++v) {
    const std::string p = view_prefix(v) + "state_cls.";
    const Var t = trunk(tape, bind, p, fs[static_cast<std::size_t>(v)]);
    for (std::size_t h = 0; h < config_.state_heads.size(); ++h) {
      out.head_per_view[h].push_back(head(tape, bind, p + config_.state_heads[h].name, t));
    }
    Var ain = fa[static_cast<std::size_t>(v)];
    if (conn) ain = concat(tape, {ain, fs[static_cast<std::size_t>(v)]}, 1);
    const std::string ap = view_prefix(v) + "action_cls.";
    out.action_per_view.push_back(head(tape, bind, ap + "out", trunk(tape, bind, ap, ain)));
  }
  out.gating_state = gating("gate_state.", f_all);
  out.gating_action = gating("gate_action.", action_all);
  for (std::size_t h = 0; h < config_.state_heads.size(); ++h) {
    out.head_fused.push_back(mixture(tape, out.gating_state, out.head_per_view[h]));
  }
  out.action_fused = mixture(tape, out.gating_action, out.action_per_view);
  return out;
}

template <typename T>
Var BasicModel<T>::joint_loss(Tape<T>& tape, const ForwardVars& vars, const BatchLabels& labels) const {
  if (labels.heads.size() != config_.state_heads.size()) {
    throw ConfigError("labels provide " + std::to_string(labels.heads.size()) + " state heads, model has " +
                      std::to_string(config_.state_heads.size()));
  }
  Var total = nll_loss(tape, vars.action_fused, std::span<const std::int64_t>(labels.action));
  for (std::size_t h = 0; h < labels.heads.size(); ++h) {
    total = add(tape, total, nll_loss(tape, vars.head_fused[h], std::span<const std::int64_t>(labels.heads[h])));
  }
  return total;
}

template <typename T>
std::vector<FusedPrediction> BasicModel<T>::predictions(const Tape<T>& tape, const ForwardVars& vars) const {
  const std::int64_t n = tape.shape(vars.action_fused)[0];
  const int views = config_.num_views;
  auto fill = [&](HeadPrediction& hp, const HeadSpec& spec, Var fused, const std::vector<Var>& per_view,
                  std::int64_t i) {
    hp.name = spec.name;
    hp.unknown_index = spec.unknown_slot ? spec.unknown_index() : -1;
    hp.fused = row_of(tape.value(fused), i);
    for (Var pv : per_view) hp.per_view.push_back(row_of(tape.value(pv), i));
    std::vector<double> scan = hp.fused;
    hp.label = static_cast<int>(std::max_element(scan.begin(), scan.end()) - scan.begin());
  };
  std::vector<FusedPrediction> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    FusedPrediction& p = out[static_cast<std::size_t>(i)];
    p.heads.resize(config_.state_heads.size());
    for (std::size_t h = 0; h < config_.state_heads.size(); ++h) {
      fill(p.heads[h], config_.state_heads[h], vars.head_fused[h],
           config_.use_gating ? vars.head_per_view[h] : std::vector<Var>{}, i);
    }
    fill(p.action, config_.action_head, vars.action_fused, vars.action_per_view, i);
    if (config_.use_gating) {
      p.gating_state = row_of(tape.value(vars.gating_state), i);
      p.gating_action = row_of(tape.value(vars.gating_action), i);
    } else {
      p.gating_state.assign(static_cast<std::size_t>(views), 1.0 / views);
      p.gating_action = p.gating_state;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> BasicModel<T>::state_features(int view, const BasicTensor<T>& frames, BnMode mode) {
  if (view < 0 || view >= config_.num_views) throw ConfigError("no such view");
  Tape<T> tape(false);
  Binder<T> bind(tape, *this);
  const std::string vp = view_prefix(view);
  Var x = run_stages(tape, bind, vp + "state.", tape.constant(frames), kStateStages);
  x = batchnorm(tape, x, bind(vp + "state.bn.gamma"), bind(vp + "state.bn.beta"), bn_.at(vp + "state.bn"), mode);
  return tape.value(flatten_batch(tape, x));
}

template class BasicModel<float>;
template class BasicModel<double>;
template BasicModel<double> BasicModel<float>::cast<double>() const;
template BasicModel<float> BasicModel<double>::cast<float>() const;
template BasicModel<float> BasicModel<float>::cast<float>() const;

}  // namespace mvsa
