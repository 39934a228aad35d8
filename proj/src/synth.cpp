#include "gradharmony/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "binary_io.hpp"
#include "gradharmony/rng.hpp"

namespace gradharmony {

namespace {

DenseVector gaussian_vector(std::mt19937_64& engine, std::size_t n, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    DenseVector v(n);
    for (double& x : v) x = dist(engine);
    return v;
}

// Fixed random linear map latent -> feature space, drawn once per dataset.
DenseMatrix random_map(std::mt19937_64& engine, std::size_t rows, std::size_t cols) {
    DenseMatrix m = DenseMatrix::zeros(rows, cols);
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
    for (double& v : m.values) v = dist(engine);
    return m;
}

DenseVector apply_map(const DenseMatrix& m, const DenseVector& x) {
    DenseVector y(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        const double* w = m.values.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) acc += w[c] * x[c];
        y[r] = acc;
    }
    return y;
}

DenseVector features_from_latent(const DenseMatrix& map, const DenseVector& latent,
                                 double noise_std, std::mt19937_64& engine) {
    DenseVector f = apply_map(map, latent);
    if (noise_std > 0.0) {
        std::normal_distribution<double> dist(0.0, noise_std);
        for (double& v : f) v += dist(engine);
    }
    return f;
}

constexpr char kDatasetMagic[6] = {'G', 'H', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

void SynthConfig::validate() const {
    if (n_samples == 0) throw ConfigError("n_samples must be positive");
    if (latent_dim == 0 || video_dim == 0 || audio_dim == 0 || text_dim == 0)
        throw ConfigError("all synth dims must be positive");
    if (k_neighbors == 0) throw ConfigError("k_neighbors must be positive");
    if (!(p_mis_text >= 0.0 && p_mis_text <= 1.0))
        throw ConfigError("p_mis_text must lie in [0, 1]");
    if (!(p_mis_audio >= 0.0 && p_mis_audio <= 1.0))
        throw ConfigError("p_mis_audio must lie in [0, 1]");
    if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be nonnegative");
    if (!(neighbor_jitter >= 0.0)) throw ConfigError("neighbor_jitter must be nonnegative");
}

std::vector<Triplet> generate(const SynthConfig& config,
                              std::vector<LatentRecord>* latents_out) {
    config.validate();

    auto map_engine = make_engine(derive_seed(config.seed, "synth-maps"));
    const DenseMatrix map_v = random_map(map_engine, config.video_dim, config.latent_dim);
    const DenseMatrix map_a = random_map(map_engine, config.audio_dim, config.latent_dim);
    const DenseMatrix map_t = random_map(map_engine, config.text_dim, config.latent_dim);

    std::vector<Triplet> out;
    out.reserve(config.n_samples);
    if (latents_out) {
        latents_out->clear();
        latents_out->reserve(config.n_samples);
    }

    for (std::uint64_t i = 0; i < config.n_samples; ++i) {
        auto engine = make_engine(derive_seed(config.seed, "synth-sample", i));
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        Triplet t;
        t.id = i;
        const DenseVector shared = gaussian_vector(engine, config.latent_dim, 1.0);

        t.audio_aligned = !(unit(engine) < config.p_mis_audio);
        t.text_aligned = !(unit(engine) < config.p_mis_text);

        const DenseVector latent_audio =
            t.audio_aligned ? shared : gaussian_vector(engine, config.latent_dim, 1.0);
        const DenseVector latent_text =
            t.text_aligned ? shared : gaussian_vector(engine, config.latent_dim, 1.0);

        t.video_raw = features_from_latent(map_v, shared, config.noise_std, engine);
        t.audio_raw = features_from_latent(map_a, latent_audio, config.noise_std, engine);
        t.text_raw = features_from_latent(map_t, latent_text, config.noise_std, engine);

        t.neighbor_texts.reserve(config.k_neighbors);
        for (std::size_t q = 0; q < config.k_neighbors; ++q) {
            DenseVector jittered = latent_text;
            if (config.neighbor_jitter > 0.0) {
                std::normal_distribution<double> dist(0.0, config.neighbor_jitter);
                for (double& v : jittered) v += dist(engine);
            }
            t.neighbor_texts.push_back(
                features_from_latent(map_t, jittered, config.noise_std, engine));
        }

        if (latents_out) latents_out->push_back({shared, latent_audio, latent_text});
        out.push_back(std::move(t));
    }
    return out;
}

SplitResult split(const std::vector<Triplet>& dataset, double train_fraction,
                  double eval_fraction, std::uint64_t seed) {
    if (std::abs(train_fraction + eval_fraction - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
    if (!(train_fraction >= 0.0 && eval_fraction >= 0.0))
        throw ConfigError("split fractions must be nonnegative");
    if (dataset.empty()) throw ConfigError("cannot split an empty dataset");

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    auto engine = make_engine(derive_seed(seed, "split"));
    std::shuffle(order.begin(), order.end(), engine);

    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(dataset.size())));

    SplitResult result;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const Triplet& t = dataset[order[pos]];
        if (pos < n_train) {
            result.train.push_back(t);
        } else if (t.text_aligned && t.audio_aligned) {
            result.eval_clean.push_back(t);
        }
    }
    if (result.eval_clean.empty())
        throw ConfigError("split produced an empty clean eval set");
    return result;
}

void save_dataset(const std::vector<Triplet>& dataset, const SynthConfig& config,
                  const std::string& path) {
    auto os = detail::open_output(path);
    detail::write_bytes(os, kDatasetMagic, sizeof(kDatasetMagic));
    detail::write_scalar<std::uint32_t>(os, kDatasetVersion);
    detail::write_scalar<std::uint64_t>(os, dataset.size());
    detail::write_scalar<std::uint32_t>(os, static_cast<std::uint32_t>(config.video_dim));
    detail::write_scalar<std::uint32_t>(os, static_cast<std::uint32_t>(config.audio_dim));
    detail::write_scalar<std::uint32_t>(os, static_cast<std::uint32_t>(config.text_dim));
    detail::write_scalar<std::uint32_t>(os, static_cast<std::uint32_t>(config.k_neighbors));
    for (const auto& t : dataset) {
        detail::write_scalar<std::uint64_t>(os, t.id);
        detail::write_doubles(os, t.video_raw);
        detail::write_doubles(os, t.audio_raw);
        detail::write_doubles(os, t.text_raw);
        for (const auto& nb : t.neighbor_texts) detail::write_doubles(os, nb);
        detail::write_scalar<std::uint8_t>(os, t.text_aligned ? 1 : 0);
        detail::write_scalar<std::uint8_t>(os, t.audio_aligned ? 1 : 0);
    }
    if (!os) throw IoError("failed writing dataset '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
    auto is = detail::open_input(path);
    char magic[sizeof(kDatasetMagic)];
    detail::read_bytes(is, magic, sizeof(magic), "dataset magic");
    if (std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
        throw IoError("'" + path + "' is not a dataset file");
    const auto version = detail::read_scalar<std::uint32_t>(is, "dataset version");
    if (version != kDatasetVersion)
        throw IoError("unsupported dataset version " + std::to_string(version));

    Dataset ds;
    const auto n = detail::read_scalar<std::uint64_t>(is, "sample count");
    ds.video_dim = detail::read_scalar<std::uint32_t>(is, "video dim");
    ds.audio_dim = detail::read_scalar<std::uint32_t>(is, "audio dim");
    ds.text_dim = detail::read_scalar<std::uint32_t>(is, "text dim");
    ds.k_neighbors = detail::read_scalar<std::uint32_t>(is, "neighbor count");
    ds.triplets.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Triplet t;
        t.id = detail::read_scalar<std::uint64_t>(is, "triplet id");
        detail::read_doubles(is, t.video_raw, ds.video_dim, "video features");
        detail::read_doubles(is, t.audio_raw, ds.audio_dim, "audio features");
        detail::read_doubles(is, t.text_raw, ds.text_dim, "text features");
        t.neighbor_texts.resize(ds.k_neighbors);
        for (auto& nb : t.neighbor_texts)
            detail::read_doubles(is, nb, ds.text_dim, "neighbor text features");
        t.text_aligned = detail::read_scalar<std::uint8_t>(is, "text flag") != 0;
        t.audio_aligned = detail::read_scalar<std::uint8_t>(is, "audio flag") != 0;
        ds.triplets.push_back(std::move(t));
    }
    return ds;
}

void export_dataset_csv(const std::vector<Triplet>& dataset, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << "id,text_aligned,audio_aligned,video_norm,audio_norm,text_norm\n";
    for (const auto& t : dataset) {
        os << t.id << ',' << (t.text_aligned ? 1 : 0) << ',' << (t.audio_aligned ? 1 : 0)
           << ',' << norm(t.video_raw) << ',' << norm(t.audio_raw) << ','
           << norm(t.text_raw) << '\n';
    }
    if (!os) throw IoError("failed writing CSV '" + path + "'");
}

TripletBatch to_batch(const std::vector<Triplet>& dataset,
                      const std::vector<std::size_t>& indices) {
    TripletBatch batch;
    batch.video.reserve(indices.size());
    batch.audio.reserve(indices.size());
    batch.text_neighbors.reserve(indices.size());
    for (std::size_t idx : indices) {
        if (idx >= dataset.size()) throw DimensionError("batch index out of range");
        const Triplet& t = dataset[idx];
        batch.video.push_back(t.video_raw);
        batch.audio.push_back(t.audio_raw);
        batch.text_neighbors.push_back(t.neighbor_texts);
    }
    return batch;
}

}  // namespace gradharmony
