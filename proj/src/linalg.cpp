#include "gradharmony/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace gradharmony {

std::size_t ShapeManifest::total_elements() const {
    std::size_t total = 0;
    for (const auto& e : entries) total += e.elements();
    return total;
}

void ShapeManifest::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& e : entries) {
        if (e.name.empty()) throw ManifestError("manifest entry with empty name");
        if (!seen.insert(e.name).second)
            throw ManifestError("duplicate manifest entry '" + e.name + "'");
        if (e.dims.empty())
            throw ManifestError("manifest entry '" + e.name + "' has no dims");
        for (std::size_t d : e.dims)
            if (d == 0)
                throw ManifestError("manifest entry '" + e.name + "' has a zero dim");
    }
    if (total_elements() == 0) throw ManifestError("manifest is empty");
}

double dot(const DenseVector& a, const DenseVector& b) {
    if (a.empty() || a.size() != b.size())
        throw DimensionError("dot: length mismatch (" + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()) + ")");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(const DenseVector& a) {
    double acc = 0.0;
    for (double v : a) acc += v * v;
    return std::sqrt(acc);
}

CosineResult cosine_similarity(const DenseVector& a, const DenseVector& b,
                               double epsilon) {
    double d = dot(a, b);
    double na = norm(a);
    double nb = norm(b);
    if (na < epsilon || nb < epsilon) return CosineResult{0.0, true};
    double c = d / (na * nb);
    return CosineResult{std::clamp(c, -1.0, 1.0), false};
}

FlatGradient flatten(const NamedTensors& tensors, const ShapeManifest& manifest) {
    manifest.validate();
    if (tensors.size() != manifest.entries.size())
        throw ManifestError("flatten: collection has " + std::to_string(tensors.size()) +
                            " tensors, manifest expects " +
                            std::to_string(manifest.entries.size()));
    FlatGradient flat;
    flat.reserve(manifest.total_elements());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& [name, tensor] = tensors[i];
        const auto& entry = manifest.entries[i];
        if (name != entry.name)
            throw ManifestError("flatten: tensor '" + name + "' where manifest expects '" +
                                entry.name + "'");
        if (tensor.dims != entry.dims)
            throw ManifestError("flatten: dim mismatch for '" + name + "'");
        if (tensor.values.size() != entry.elements())
            throw ManifestError("flatten: value count mismatch for '" + name + "'");
        flat.insert(flat.end(), tensor.values.begin(), tensor.values.end());
    }
    return flat;
}

NamedTensors reshape(const FlatGradient& flat, const ShapeManifest& manifest) {
    manifest.validate();
    if (flat.size() != manifest.total_elements())
        throw ManifestError("reshape: flat length " + std::to_string(flat.size()) +
                            " does not match manifest total " +
                            std::to_string(manifest.total_elements()));
    NamedTensors out;
    out.reserve(manifest.entries.size());
    std::size_t offset = 0;
    for (const auto& entry : manifest.entries) {
        std::size_t n = entry.elements();
        Tensor t;
        t.dims = entry.dims;
        t.values.assign(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                        flat.begin() + static_cast<std::ptrdiff_t>(offset + n));
        out.emplace_back(entry.name, std::move(t));
        offset += n;
    }
    return out;
}

void axpy(double alpha, const DenseVector& x, DenseVector& y) {
    if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

DenseVector add(const DenseVector& a, const DenseVector& b) {
    if (a.size() != b.size()) throw DimensionError("add: length mismatch");
    DenseVector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

DenseVector scale(double alpha, const DenseVector& a) {
    DenseVector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i];
    return out;
}

bool all_finite(const DenseVector& a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace gradharmony
