#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradharmony/linalg.hpp"
#include "gradharmony/model.hpp"

namespace gradharmony {

// One synthetic (video, audio, text) sample. The aligned flags record how the
// sample was generated: a misaligned modality derives from a decoy latent.
struct Triplet {
    std::uint64_t id = 0;
    DenseVector video_raw, audio_raw, text_raw;
    std::vector<DenseVector> neighbor_texts;
    bool text_aligned = true;
    bool audio_aligned = true;
};

struct SynthConfig {
    std::uint64_t n_samples = 1000;
    std::size_t latent_dim = 16;
    std::size_t video_dim = 24;
    std::size_t audio_dim = 20;
    std::size_t text_dim = 28;
    double p_mis_text = 0.0;
    double p_mis_audio = 0.0;
    double noise_std = 0.1;
    std::size_t k_neighbors = 4;
    double neighbor_jitter = 0.25;  // stddev of the latent perturbation per neighbor
    std::uint64_t seed = 0;

    void validate() const;
};

// Per-sample generator latents, exposed for tests that check the generative
// construction directly.
struct LatentRecord {
    DenseVector shared;  // drives the video features
    DenseVector audio;   // equals shared when audio_aligned
    DenseVector text;    // equals shared when text_aligned
};

// Deterministic in config.seed; per-sample streams are derived by index so
// generation order cannot change the output.
std::vector<Triplet> generate(const SynthConfig& config,
                              std::vector<LatentRecord>* latents_out = nullptr);

struct SplitResult {
    std::vector<Triplet> train;
    std::vector<Triplet> eval_clean;  // fully aligned triplets only
};

// Seeded shuffle, then a train/eval partition by fraction; the eval part is
// filtered down to fully aligned triplets.
SplitResult split(const std::vector<Triplet>& dataset, double train_fraction,
                  double eval_fraction, std::uint64_t seed);

// Binary dataset file: header (magic, version, n_samples, dims, k) then one
// record per triplet, features as little-endian doubles plus one byte per
// alignment flag.
void save_dataset(const std::vector<Triplet>& dataset, const SynthConfig& config,
                  const std::string& path);

struct Dataset {
    std::vector<Triplet> triplets;
    std::size_t video_dim = 0, audio_dim = 0, text_dim = 0, k_neighbors = 0;
};

Dataset load_dataset(const std::string& path);

void export_dataset_csv(const std::vector<Triplet>& dataset, const std::string& path);

// Gathers raw features for the given sample indices into a model batch.
TripletBatch to_batch(const std::vector<Triplet>& dataset,
                      const std::vector<std::size_t>& indices);

}  // namespace gradharmony
