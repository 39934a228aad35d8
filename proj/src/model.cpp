#include "gradharmony/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "gradharmony/rng.hpp"

namespace gradharmony {

namespace {

enum class PathKind { video_va, audio, video_vt, text };

const LinearLayer& tokenizer_for(const ModelParams& p, PathKind kind) {
    switch (kind) {
        case PathKind::video_va:
        case PathKind::video_vt: return p.tokenizer_v;
        case PathKind::audio: return p.tokenizer_a;
        case PathKind::text: return p.tokenizer_t;
    }
    throw DimensionError("unreachable path kind");
}

LinearLayer& tokenizer_for(ModelParams& p, PathKind kind) {
    return const_cast<LinearLayer&>(tokenizer_for(static_cast<const ModelParams&>(p), kind));
}

const LinearLayer& head_for(const ModelParams& p, PathKind kind) {
    switch (kind) {
        case PathKind::video_va: return p.head_v_va;
        case PathKind::audio: return p.head_a;
        case PathKind::video_vt: return p.head_v_vt;
        case PathKind::text: return p.head_t;
    }
    throw DimensionError("unreachable path kind");
}

LinearLayer& head_for(ModelParams& p, PathKind kind) {
    return const_cast<LinearLayer&>(head_for(static_cast<const ModelParams&>(p), kind));
}

DenseVector apply_linear(const LinearLayer& layer, const DenseVector& x) {
    if (layer.weight.cols != x.size())
        throw DimensionError("linear layer expects input of length " +
                             std::to_string(layer.weight.cols) + ", got " +
                             std::to_string(x.size()));
    DenseVector y(layer.weight.rows);
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
        double acc = layer.bias[r];
        const double* w = layer.weight.values.data() + r * layer.weight.cols;
        for (std::size_t c = 0; c < layer.weight.cols; ++c) acc += w[c] * x[c];
        y[r] = acc;
    }
    return y;
}

// Activations for one encoder path, kept for the backward pass.
struct PathCache {
    DenseVector input;
    DenseVector token;             // tokenizer output
    std::vector<DenseVector> act;  // backbone layer outputs, post-activation
    DenseVector head_out;          // pre-normalization embedding u
    double head_norm = 0.0;        // ||u||
    DenseVector z;                 // u / ||u||
};

// x -> tokenizer -> backbone (tanh between layers) -> pair head -> L2 norm.
PathCache encode_path(const ModelParams& p, PathKind kind, const DenseVector& x) {
    PathCache cache;
    cache.input = x;
    cache.token = apply_linear(tokenizer_for(p, kind), x);
    const std::size_t depth = p.backbone.size();
    cache.act.reserve(depth);
    const DenseVector* cur = &cache.token;
    for (std::size_t l = 0; l < depth; ++l) {
        DenseVector a = apply_linear(p.backbone[l], *cur);
        if (l + 1 < depth)
            for (double& v : a) v = std::tanh(v);
        cache.act.push_back(std::move(a));
        cur = &cache.act.back();
    }
    cache.head_out = apply_linear(head_for(p, kind), *cur);
    cache.head_norm = norm(cache.head_out);
    cache.z.resize(cache.head_out.size());
    for (std::size_t i = 0; i < cache.z.size(); ++i)
        cache.z[i] = cache.head_out[i] / cache.head_norm;
    return cache;
}

void accumulate_linear_grad(LinearLayer& g, const DenseVector& dy, const DenseVector& x) {
    for (std::size_t r = 0; r < g.weight.rows; ++r) {
        double* w = g.weight.values.data() + r * g.weight.cols;
        const double d = dy[r];
        for (std::size_t c = 0; c < g.weight.cols; ++c) w[c] += d * x[c];
        g.bias[r] += d;
    }
}

DenseVector linear_backward_input(const LinearLayer& layer, const DenseVector& dy) {
    DenseVector dx(layer.weight.cols, 0.0);
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
        const double* w = layer.weight.values.data() + r * layer.weight.cols;
        const double d = dy[r];
        for (std::size_t c = 0; c < layer.weight.cols; ++c) dx[c] += d * w[c];
    }
    return dx;
}

// Accumulates d(loss)/d(params) for one path into `grads`, given dz at the
// normalized embedding.
void backprop_path(const ModelParams& p, PathKind kind, const PathCache& cache,
                   const DenseVector& dz, ModelParams& grads) {
    // z = u/||u||  =>  du = (dz - (dz.z) z) / ||u||
    const double zdot = dot(dz, cache.z);
    DenseVector du(dz.size());
    for (std::size_t i = 0; i < dz.size(); ++i)
        du[i] = (dz[i] - zdot * cache.z[i]) / cache.head_norm;

    const std::size_t depth = p.backbone.size();
    const DenseVector& head_in = depth == 0 ? cache.token : cache.act.back();
    accumulate_linear_grad(head_for(grads, kind), du, head_in);
    DenseVector da = linear_backward_input(head_for(p, kind), du);

    for (std::size_t l = depth; l-- > 0;) {
        if (l + 1 < depth) {
            // tanh'(s) = 1 - tanh(s)^2, and act[l] stores tanh(s)
            const DenseVector& a = cache.act[l];
            for (std::size_t i = 0; i < da.size(); ++i) da[i] *= 1.0 - a[i] * a[i];
        }
        const DenseVector& layer_in = l == 0 ? cache.token : cache.act[l - 1];
        accumulate_linear_grad(grads.backbone[l], da, layer_in);
        da = linear_backward_input(p.backbone[l], da);
    }

    accumulate_linear_grad(tokenizer_for(grads, kind), da, cache.input);
}

double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

void check_batch(const TripletBatch& batch, bool needs_text) {
    const std::size_t n = batch.size();
    if (n < 2)
        throw DimensionError("batch of size " + std::to_string(n) +
                             " has no in-batch negatives (need >= 2)");
    if (batch.audio.size() != n || batch.text_neighbors.size() != n)
        throw DimensionError("ragged triplet batch");
    if (needs_text) {
        const std::size_t k = batch.k_neighbors();
        if (k == 0) throw ConfigError("text loss requires k >= 1 neighbor texts");
        for (const auto& nb : batch.text_neighbors)
            if (nb.size() != k) throw DimensionError("ragged neighbor-text lists");
    }
}

std::vector<PathCache> encode_all(const ModelParams& p, PathKind kind,
                                  const std::vector<DenseVector>& xs) {
    std::vector<PathCache> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(encode_path(p, kind, x));
    return out;
}

// One NCE direction: anchors[i] against others[j], positive at j == i.
// Returns the mean loss and accumulates embedding-space gradients scaled by
// `weight` into d_anchor / d_other. With detach set, others only receive
// gradient through their own positive pair.
double nce_direction(const std::vector<DenseVector>& anchors,
                     const std::vector<DenseVector>& others, double tau,
                     bool detach, double weight,
                     std::vector<DenseVector>* d_anchor,
                     std::vector<DenseVector>* d_other) {
    const std::size_t n = anchors.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logits(n);
        for (std::size_t j = 0; j < n; ++j) logits[j] = dot(anchors[i], others[j]) / tau;
        const double lse = log_sum_exp(logits);
        total += lse - logits[i];
        if (!d_anchor) continue;
        for (std::size_t j = 0; j < n; ++j) {
            const double p = std::exp(logits[j] - lse);
            const double dl = weight * (p - (j == i ? 1.0 : 0.0)) / (n * tau);
            axpy(dl, others[j], (*d_anchor)[i]);
            if (!detach || j == i) axpy(dl, anchors[i], (*d_other)[j]);
        }
    }
    return total / static_cast<double>(n);
}

// One MIL-NCE direction: video anchors against per-sample text bags. The
// positive mass for anchor i is its own bag, negatives are all other bags.
double mil_nce_direction(const std::vector<DenseVector>& anchors,
                         const std::vector<std::vector<DenseVector>>& bags,
                         double tau, bool detach, double weight,
                         std::vector<DenseVector>* d_anchor,
                         std::vector<std::vector<DenseVector>>* d_bags) {
    const std::size_t n = anchors.size();
    const std::size_t k = bags.front().size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> all_logits(n * k);
        std::vector<double> pos_logits(k);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t q = 0; q < k; ++q) {
                const double l = dot(anchors[i], bags[j][q]) / tau;
                all_logits[j * k + q] = l;
                if (j == i) pos_logits[q] = l;
            }
        const double lse_all = log_sum_exp(all_logits);
        const double lse_pos = log_sum_exp(pos_logits);
        total += lse_all - lse_pos;
        if (!d_anchor) continue;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t q = 0; q < k; ++q) {
                const double p = std::exp(all_logits[j * k + q] - lse_all);
                const double r = j == i ? std::exp(all_logits[j * k + q] - lse_pos) : 0.0;
                const double dl = weight * (p - r) / (n * tau);
                axpy(dl, bags[j][q], (*d_anchor)[i]);
                if (!detach || j == i) axpy(dl, anchors[i], (*d_bags)[j][q]);
            }
    }
    return total / static_cast<double>(n);
}

// Anchor-swapped MIL-NCE direction: sample i's text bag (collectively)
// against all videos, positive mass at video i.
double bag_anchor_direction(const std::vector<DenseVector>& zv,
                            const std::vector<std::vector<DenseVector>>& bags,
                            double tau, bool detach, double weight,
                            std::vector<DenseVector>* d_zv,
                            std::vector<std::vector<DenseVector>>* d_bags) {
    const std::size_t n = zv.size();
    const std::size_t k = bags.front().size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> all_logits(n * k);
        std::vector<double> pos_logits(k);
        for (std::size_t q = 0; q < k; ++q)
            for (std::size_t j = 0; j < n; ++j) {
                const double l = dot(bags[i][q], zv[j]) / tau;
                all_logits[q * n + j] = l;
                if (j == i) pos_logits[q] = l;
            }
        const double lse_all = log_sum_exp(all_logits);
        const double lse_pos = log_sum_exp(pos_logits);
        total += lse_all - lse_pos;
        if (!d_zv) continue;
        for (std::size_t q = 0; q < k; ++q)
            for (std::size_t j = 0; j < n; ++j) {
                const double p = std::exp(all_logits[q * n + j] - lse_all);
                const double r = j == i ? std::exp(all_logits[q * n + j] - lse_pos) : 0.0;
                const double dl = weight * (p - r) / (n * tau);
                axpy(dl, zv[j], (*d_bags)[i][q]);
                if (!detach || j == i) axpy(dl, bags[i][q], (*d_zv)[j]);
            }
    }
    return total / static_cast<double>(n);
}

std::vector<DenseVector> zero_like_embeddings(const std::vector<PathCache>& caches) {
    std::vector<DenseVector> out;
    out.reserve(caches.size());
    for (const auto& c : caches) out.emplace_back(c.z.size(), 0.0);
    return out;
}

std::vector<DenseVector> collect_z(const std::vector<PathCache>& caches) {
    std::vector<DenseVector> out;
    out.reserve(caches.size());
    for (const auto& c : caches) out.push_back(c.z);
    return out;
}

void validate_loss_options(const LossOptions& opts) {
    if (!(opts.temperature > 0.0))
        throw ConfigError("temperature must be positive");
}

}  // namespace

void DimConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(video_dim, "video_dim");
    positive(audio_dim, "audio_dim");
    positive(text_dim, "text_dim");
    positive(backbone_dim, "backbone_dim");
    positive(backbone_depth, "backbone_depth");
    positive(embed_dim_va, "embed_dim_va");
    positive(embed_dim_vt, "embed_dim_vt");
}

namespace {

struct NamedLayer {
    std::string name;
    const LinearLayer* layer;
};

std::vector<NamedLayer> layer_list(const ModelParams& p) {
    std::vector<NamedLayer> out;
    out.push_back({"tokenizer_v", &p.tokenizer_v});
    out.push_back({"tokenizer_a", &p.tokenizer_a});
    out.push_back({"tokenizer_t", &p.tokenizer_t});
    for (std::size_t l = 0; l < p.backbone.size(); ++l)
        out.push_back({"backbone." + std::to_string(l), &p.backbone[l]});
    out.push_back({"head_v_va", &p.head_v_va});
    out.push_back({"head_a", &p.head_a});
    out.push_back({"head_v_vt", &p.head_v_vt});
    out.push_back({"head_t", &p.head_t});
    return out;
}

LinearLayer zero_layer(std::size_t out_dim, std::size_t in_dim) {
    return LinearLayer{DenseMatrix::zeros(out_dim, in_dim), DenseVector(out_dim, 0.0)};
}

ModelParams make_zero_params(const DimConfig& dims) {
    dims.validate();
    ModelParams p;
    p.dims = dims;
    p.tokenizer_v = zero_layer(dims.backbone_dim, dims.video_dim);
    p.tokenizer_a = zero_layer(dims.backbone_dim, dims.audio_dim);
    p.tokenizer_t = zero_layer(dims.backbone_dim, dims.text_dim);
    p.backbone.reserve(dims.backbone_depth);
    for (std::size_t l = 0; l < dims.backbone_depth; ++l)
        p.backbone.push_back(zero_layer(dims.backbone_dim, dims.backbone_dim));
    p.head_v_va = zero_layer(dims.embed_dim_va, dims.backbone_dim);
    p.head_a = zero_layer(dims.embed_dim_va, dims.backbone_dim);
    p.head_v_vt = zero_layer(dims.embed_dim_vt, dims.backbone_dim);
    p.head_t = zero_layer(dims.embed_dim_vt, dims.backbone_dim);
    return p;
}

}  // namespace

ShapeManifest ModelParams::manifest() const {
    ShapeManifest m;
    for (const auto& [name, layer] : layer_list(*this)) {
        m.entries.push_back({name + ".weight", {layer->weight.rows, layer->weight.cols}});
        m.entries.push_back({name + ".bias", {layer->bias.size()}});
    }
    return m;
}

std::size_t ModelParams::parameter_count() const { return manifest().total_elements(); }

FlatGradient ModelParams::flatten_values() const {
    FlatGradient flat;
    flat.reserve(parameter_count());
    for (const auto& [name, layer] : layer_list(*this)) {
        flat.insert(flat.end(), layer->weight.values.begin(), layer->weight.values.end());
        flat.insert(flat.end(), layer->bias.begin(), layer->bias.end());
    }
    return flat;
}

void ModelParams::assign_from_flat(const FlatGradient& flat) {
    if (flat.size() != parameter_count())
        throw ManifestError("assign_from_flat: length " + std::to_string(flat.size()) +
                            " does not match parameter count " +
                            std::to_string(parameter_count()));
    std::size_t off = 0;
    for (const auto& [name, layer] : layer_list(*this)) {
        auto* mut = const_cast<LinearLayer*>(layer);
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off),
                    mut->weight.values.size(), mut->weight.values.begin());
        off += mut->weight.values.size();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), mut->bias.size(),
                    mut->bias.begin());
        off += mut->bias.size();
    }
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
    return make_zero_params(other.dims);
}

ModelParams init_params(std::uint64_t seed, const DimConfig& dims) {
    ModelParams p = make_zero_params(dims);
    auto engine = make_engine(derive_seed(seed, "model-init"));
    for (const auto& [name, layer] : layer_list(p)) {
        auto* mut = const_cast<LinearLayer*>(layer);
        const double stddev = 1.0 / std::sqrt(static_cast<double>(mut->weight.cols));
        std::normal_distribution<double> dist(0.0, stddev);
        for (double& w : mut->weight.values) w = dist(engine);
        // biases stay zero
    }
    return p;
}

EmbeddingBatch forward(const ModelParams& params, const TripletBatch& batch) {
    check_batch(batch, /*needs_text=*/true);
    EmbeddingBatch out;
    out.batch_size = batch.size();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.z_v_va.push_back(encode_path(params, PathKind::video_va, batch.video[i]).z);
        out.z_a.push_back(encode_path(params, PathKind::audio, batch.audio[i]).z);
        out.z_v_vt.push_back(encode_path(params, PathKind::video_vt, batch.video[i]).z);
        std::vector<DenseVector> bag;
        for (const auto& t : batch.text_neighbors[i])
            bag.push_back(encode_path(params, PathKind::text, t).z);
        out.z_t_neighbors.push_back(std::move(bag));
    }
    return out;
}

DenseVector encode_video_va(const ModelParams& params, const DenseVector& x) {
    return encode_path(params, PathKind::video_va, x).z;
}
DenseVector encode_audio(const ModelParams& params, const DenseVector& x) {
    return encode_path(params, PathKind::audio, x).z;
}
DenseVector encode_video_vt(const ModelParams& params, const DenseVector& x) {
    return encode_path(params, PathKind::video_vt, x).z;
}
DenseVector encode_text(const ModelParams& params, const DenseVector& x) {
    return encode_path(params, PathKind::text, x).z;
}

LossGrad loss_and_grad_va(const ModelParams& params, const TripletBatch& batch,
                          const LossOptions& opts) {
    validate_loss_options(opts);
    check_batch(batch, /*needs_text=*/false);
    const auto caches_v = encode_all(params, PathKind::video_va, batch.video);
    const auto caches_a = encode_all(params, PathKind::audio, batch.audio);
    const auto zv = collect_z(caches_v);
    const auto za = collect_z(caches_a);

    auto dzv = zero_like_embeddings(caches_v);
    auto dza = zero_like_embeddings(caches_a);
    const double weight = opts.symmetric ? 0.5 : 1.0;
    double loss = weight * nce_direction(zv, za, opts.temperature, opts.detach_negatives,
                                         weight, &dzv, &dza);
    if (opts.symmetric)
        loss += weight * nce_direction(za, zv, opts.temperature, opts.detach_negatives,
                                       weight, &dza, &dzv);

    ModelParams grads = ModelParams::zeros_like(params);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        backprop_path(params, PathKind::video_va, caches_v[i], dzv[i], grads);
        backprop_path(params, PathKind::audio, caches_a[i], dza[i], grads);
    }
    return LossGrad{loss, grads.flatten_values()};
}

double loss_va(const ModelParams& params, const TripletBatch& batch,
               const LossOptions& opts) {
    validate_loss_options(opts);
    check_batch(batch, /*needs_text=*/false);
    std::vector<DenseVector> zv, za;
    for (const auto& x : batch.video) zv.push_back(encode_path(params, PathKind::video_va, x).z);
    for (const auto& x : batch.audio) za.push_back(encode_path(params, PathKind::audio, x).z);
    const double weight = opts.symmetric ? 0.5 : 1.0;
    double loss = weight * nce_direction(zv, za, opts.temperature, false, 0.0, nullptr, nullptr);
    if (opts.symmetric)
        loss += weight * nce_direction(za, zv, opts.temperature, false, 0.0, nullptr, nullptr);
    return loss;
}

LossGrad loss_and_grad_vt(const ModelParams& params, const TripletBatch& batch,
                          const LossOptions& opts) {
    validate_loss_options(opts);
    check_batch(batch, /*needs_text=*/true);
    const auto caches_v = encode_all(params, PathKind::video_vt, batch.video);
    std::vector<std::vector<PathCache>> caches_t;
    caches_t.reserve(batch.size());
    for (const auto& bag : batch.text_neighbors)
        caches_t.push_back(encode_all(params, PathKind::text, bag));

    const auto zv = collect_z(caches_v);
    std::vector<std::vector<DenseVector>> zt, dzt;
    for (const auto& bag : caches_t) {
        zt.push_back(collect_z(bag));
        dzt.push_back(zero_like_embeddings(bag));
    }
    auto dzv = zero_like_embeddings(caches_v);

    const double weight = opts.symmetric ? 0.5 : 1.0;
    double loss = weight * mil_nce_direction(zv, zt, opts.temperature,
                                             opts.detach_negatives, weight, &dzv, &dzt);
    if (opts.symmetric)
        loss += weight * bag_anchor_direction(zv, zt, opts.temperature,
                                              opts.detach_negatives, weight, &dzv, &dzt);

    ModelParams grads = ModelParams::zeros_like(params);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        backprop_path(params, PathKind::video_vt, caches_v[i], dzv[i], grads);
        for (std::size_t q = 0; q < caches_t[i].size(); ++q)
            backprop_path(params, PathKind::text, caches_t[i][q], dzt[i][q], grads);
    }
    return LossGrad{loss, grads.flatten_values()};
}

double loss_vt(const ModelParams& params, const TripletBatch& batch,
               const LossOptions& opts) {
    validate_loss_options(opts);
    check_batch(batch, /*needs_text=*/true);
    std::vector<DenseVector> zv;
    for (const auto& x : batch.video) zv.push_back(encode_path(params, PathKind::video_vt, x).z);
    std::vector<std::vector<DenseVector>> zt;
    for (const auto& bag : batch.text_neighbors) {
        std::vector<DenseVector> z;
        for (const auto& t : bag) z.push_back(encode_path(params, PathKind::text, t).z);
        zt.push_back(std::move(z));
    }
    const double weight = opts.symmetric ? 0.5 : 1.0;
    double loss = weight * mil_nce_direction(zv, zt, opts.temperature, false, 0.0,
                                             nullptr, nullptr);
    if (opts.symmetric)
        loss += weight * bag_anchor_direction(zv, zt, opts.temperature, false, 0.0,
                                              nullptr, nullptr);
    return loss;
}

std::vector<PerSampleGrad> per_sample_grads(const ModelParams& params,
                                            const TripletBatch& batch,
                                            const LossOptions& opts) {
    validate_loss_options(opts);
    check_batch(batch, /*needs_text=*/true);
    const std::size_t n = batch.size();
    const std::size_t k = batch.k_neighbors();
    const double tau = opts.temperature;

    const auto caches_v_va = encode_all(params, PathKind::video_va, batch.video);
    const auto caches_a = encode_all(params, PathKind::audio, batch.audio);
    const auto caches_v_vt = encode_all(params, PathKind::video_vt, batch.video);
    std::vector<std::vector<PathCache>> caches_t;
    for (const auto& bag : batch.text_neighbors)
        caches_t.push_back(encode_all(params, PathKind::text, bag));

    const auto zv_va = collect_z(caches_v_va);
    const auto za = collect_z(caches_a);
    const auto zv_vt = collect_z(caches_v_vt);
    std::vector<std::vector<DenseVector>> zt;
    for (const auto& bag : caches_t) zt.push_back(collect_z(bag));

    std::vector<PerSampleGrad> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        // va: per-sample NCE with negatives held constant.
        std::vector<double> logits(n);
        for (std::size_t j = 0; j < n; ++j) logits[j] = dot(zv_va[i], za[j]) / tau;
        const double lse = log_sum_exp(logits);
        out[i].loss_va = lse - logits[i];

        DenseVector dzv(zv_va[i].size(), 0.0);
        DenseVector dza(za[i].size(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double dl = (std::exp(logits[j] - lse) - (j == i ? 1.0 : 0.0)) / tau;
            axpy(dl, za[j], dzv);
            if (j == i) axpy(dl, zv_va[i], dza);
        }
        ModelParams g_va = ModelParams::zeros_like(params);
        backprop_path(params, PathKind::video_va, caches_v_va[i], dzv, g_va);
        backprop_path(params, PathKind::audio, caches_a[i], dza, g_va);
        out[i].g_va = g_va.flatten_values();

        // vt: per-sample MIL-NCE, same convention.
        std::vector<double> all_logits(n * k);
        std::vector<double> pos_logits(k);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t q = 0; q < k; ++q) {
                const double l = dot(zv_vt[i], zt[j][q]) / tau;
                all_logits[j * k + q] = l;
                if (j == i) pos_logits[q] = l;
            }
        const double lse_all = log_sum_exp(all_logits);
        const double lse_pos = log_sum_exp(pos_logits);
        out[i].loss_vt = lse_all - lse_pos;

        DenseVector dzv2(zv_vt[i].size(), 0.0);
        std::vector<DenseVector> dzt(k, DenseVector(zt[i][0].size(), 0.0));
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t q = 0; q < k; ++q) {
                const double p = std::exp(all_logits[j * k + q] - lse_all);
                const double r = j == i ? std::exp(all_logits[j * k + q] - lse_pos) : 0.0;
                const double dl = (p - r) / tau;
                axpy(dl, zt[j][q], dzv2);
                if (j == i) axpy(dl, zv_vt[i], dzt[q]);
            }
        ModelParams g_vt = ModelParams::zeros_like(params);
        backprop_path(params, PathKind::video_vt, caches_v_vt[i], dzv2, g_vt);
        for (std::size_t q = 0; q < k; ++q)
            backprop_path(params, PathKind::text, caches_t[i][q], dzt[q], g_vt);
        out[i].g_vt = g_vt.flatten_values();
    }
    return out;
}

namespace {

constexpr char kCheckpointMagic[6] = {'G', 'H', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

DimConfig dims_from_manifest(const ShapeManifest& m) {
    DimConfig dims{};
    dims.backbone_depth = 0;
    bool saw_v = false, saw_a = false, saw_t = false, saw_va = false, saw_vt = false;
    for (const auto& e : m.entries) {
        if (e.name == "tokenizer_v.weight" && e.dims.size() == 2) {
            dims.backbone_dim = e.dims[0];
            dims.video_dim = e.dims[1];
            saw_v = true;
        } else if (e.name == "tokenizer_a.weight" && e.dims.size() == 2) {
            dims.audio_dim = e.dims[1];
            saw_a = true;
        } else if (e.name == "tokenizer_t.weight" && e.dims.size() == 2) {
            dims.text_dim = e.dims[1];
            saw_t = true;
        } else if (e.name == "head_v_va.weight" && e.dims.size() == 2) {
            dims.embed_dim_va = e.dims[0];
            saw_va = true;
        } else if (e.name == "head_v_vt.weight" && e.dims.size() == 2) {
            dims.embed_dim_vt = e.dims[0];
            saw_vt = true;
        } else if (e.name.rfind("backbone.", 0) == 0 &&
                   e.name.size() > 7 && e.name.substr(e.name.size() - 7) == ".weight") {
            ++dims.backbone_depth;
        }
    }
    if (!(saw_v && saw_a && saw_t && saw_va && saw_vt) || dims.backbone_depth == 0)
        throw CheckpointError("checkpoint manifest does not describe a model");
    return dims;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    auto os = detail::open_output(path);
    detail::write_bytes(os, kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_scalar<std::uint32_t>(os, kCheckpointVersion);
    const ShapeManifest m = params.manifest();
    detail::write_scalar<std::uint32_t>(os, static_cast<std::uint32_t>(m.entries.size()));
    for (const auto& e : m.entries) {
        detail::write_string(os, e.name);
        detail::write_scalar<std::uint32_t>(os, static_cast<std::uint32_t>(e.dims.size()));
        for (std::size_t d : e.dims) detail::write_scalar<std::uint64_t>(os, d);
    }
    detail::write_doubles(os, params.flatten_values());
    if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path) {
    auto is = detail::open_input(path);
    char magic[sizeof(kCheckpointMagic)];
    detail::read_bytes(is, magic, sizeof(magic), "checkpoint magic");
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw CheckpointError("'" + path + "' is not a checkpoint file");
    const auto version = detail::read_scalar<std::uint32_t>(is, "checkpoint version");
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    ShapeManifest manifest;
    const auto n_entries = detail::read_scalar<std::uint32_t>(is, "manifest size");
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        ShapeEntry e;
        e.name = detail::read_string(is, "manifest entry name");
        const auto ndims = detail::read_scalar<std::uint32_t>(is, "manifest entry rank");
        for (std::uint32_t d = 0; d < ndims; ++d)
            e.dims.push_back(static_cast<std::size_t>(
                detail::read_scalar<std::uint64_t>(is, "manifest entry dim")));
        manifest.entries.push_back(std::move(e));
    }

    ModelParams params = make_zero_params(dims_from_manifest(manifest));
    const ShapeManifest expected = params.manifest();
    if (expected.entries.size() != manifest.entries.size())
        throw CheckpointError("checkpoint manifest does not match the expected layout");
    for (std::size_t i = 0; i < expected.entries.size(); ++i)
        if (expected.entries[i].name != manifest.entries[i].name ||
            expected.entries[i].dims != manifest.entries[i].dims)
            throw CheckpointError("checkpoint manifest mismatch at '" +
                                  manifest.entries[i].name + "'");

    FlatGradient values;
    detail::read_doubles(is, values, expected.total_elements(), "checkpoint parameters");
    if (!all_finite(values))
        throw CheckpointError("checkpoint contains non-finite parameters");
    params.assign_from_flat(values);
    return params;
}

}  // namespace gradharmony
