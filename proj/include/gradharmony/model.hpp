#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradharmony/linalg.hpp"

namespace gradharmony {

struct DimConfig {
    std::size_t video_dim = 24;
    std::size_t audio_dim = 20;
    std::size_t text_dim = 28;
    std::size_t backbone_dim = 32;
    std::size_t backbone_depth = 2;
    std::size_t embed_dim_va = 16;
    std::size_t embed_dim_vt = 16;

    void validate() const;  // throws ConfigError on any nonpositive dim
};

// y = W x + b
struct LinearLayer {
    DenseMatrix weight;  // out x in
    DenseVector bias;    // out
};

// Shared-backbone encoder: per-modality input projections feed one weight-
// shared MLP, followed by per-pair heads into the two comparison spaces.
// Value type; gradients are held in a zeroed copy of the same shape.
struct ModelParams {
    DimConfig dims;
    LinearLayer tokenizer_v, tokenizer_a, tokenizer_t;
    std::vector<LinearLayer> backbone;  // one copy, used by all three paths
    LinearLayer head_v_va, head_a;      // into the va space
    LinearLayer head_v_vt, head_t;      // into the vt space

    ShapeManifest manifest() const;
    std::size_t parameter_count() const;

    // Parameter values concatenated in manifest order, and the inverse.
    FlatGradient flatten_values() const;
    void assign_from_flat(const FlatGradient& flat);

    static ModelParams zeros_like(const ModelParams& other);
};

// Deterministic init: weights ~ N(0, 1/fan_in), biases zero.
ModelParams init_params(std::uint64_t seed, const DimConfig& dims);

// One training sample batch as raw per-modality features.
struct TripletBatch {
    std::vector<DenseVector> video;
    std::vector<DenseVector> audio;
    std::vector<std::vector<DenseVector>> text_neighbors;  // [sample][k]

    std::size_t size() const { return video.size(); }
    std::size_t k_neighbors() const {
        return text_neighbors.empty() ? 0 : text_neighbors.front().size();
    }
};

struct EmbeddingBatch {
    std::vector<DenseVector> z_v_va, z_a;                 // va space, unit norm
    std::vector<DenseVector> z_v_vt;                      // vt space, unit norm
    std::vector<std::vector<DenseVector>> z_t_neighbors;  // [sample][k], vt space
    std::size_t batch_size = 0;
};

struct LossOptions {
    double temperature = 0.07;
    // Adds the anchor-swapped direction and averages the two.
    bool symmetric = false;
    // Treat other samples' embeddings (the in-batch negatives) as constants
    // when differentiating. Off: the exact gradient of the batch loss.
    bool detach_negatives = false;
};

EmbeddingBatch forward(const ModelParams& params, const TripletBatch& batch);

// Single-input encoders, used by evaluation. Output is unit-normalized.
DenseVector encode_video_va(const ModelParams& params, const DenseVector& x);
DenseVector encode_audio(const ModelParams& params, const DenseVector& x);
DenseVector encode_video_vt(const ModelParams& params, const DenseVector& x);
DenseVector encode_text(const ModelParams& params, const DenseVector& x);

struct LossGrad {
    double loss = 0.0;
    FlatGradient grad;  // manifest order; unused parameter blocks are zero
};

// Batch-mean NCE over video-audio pairs, video as anchor, in-batch negatives.
LossGrad loss_and_grad_va(const ModelParams& params, const TripletBatch& batch,
                          const LossOptions& opts = {});
double loss_va(const ModelParams& params, const TripletBatch& batch,
               const LossOptions& opts = {});

// Batch-mean multiple-instance NCE over video-text pairs: the positive bag is
// the sample's k neighbor texts, negatives are every neighbor text of every
// other sample in the batch.
LossGrad loss_and_grad_vt(const ModelParams& params, const TripletBatch& batch,
                          const LossOptions& opts = {});
double loss_vt(const ModelParams& params, const TripletBatch& batch,
               const LossOptions& opts = {});

struct PerSampleGrad {
    double loss_va = 0.0;
    double loss_vt = 0.0;
    FlatGradient g_va;
    FlatGradient g_vt;
};

// One gradient pair per triplet, as if that triplet alone contributed its
// per-sample loss. Negatives stay fixed to the other batch members and are
// treated as constants, so "the gradient of one triplet" is well defined.
std::vector<PerSampleGrad> per_sample_grads(const ModelParams& params,
                                            const TripletBatch& batch,
                                            const LossOptions& opts = {});

// Binary checkpoint: magic, version, length-prefixed manifest records, then
// all parameters as little-endian doubles in manifest order.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace gradharmony
