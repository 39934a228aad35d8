#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gradharmony/errors.hpp"

namespace gradharmony {

using DenseVector = std::vector<double>;

// Flattened parameter gradient, laid out in shape-manifest order.
using FlatGradient = DenseVector;

constexpr double kNormEpsilon = 1e-12;

struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major, length rows*cols

    static DenseMatrix zeros(std::size_t r, std::size_t c) {
        return DenseMatrix{r, c, std::vector<double>(r * c, 0.0)};
    }
    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct ShapeEntry {
    std::string name;
    std::vector<std::size_t> dims;

    std::size_t elements() const {
        std::size_t n = 1;
        for (std::size_t d : dims) n *= d;
        return n;
    }
};

// Ordered list of (tensor name, dims). Fixes the layout of flattened
// gradients and of checkpoints.
struct ShapeManifest {
    std::vector<ShapeEntry> entries;

    std::size_t total_elements() const;
    // Unique names, positive dims, nonzero total. Throws ManifestError.
    void validate() const;
};

struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<double> values;
};

// Ordered named tensor collection, matched against a manifest by position.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

double dot(const DenseVector& a, const DenseVector& b);
double norm(const DenseVector& a);

struct CosineResult {
    double value = 0.0;
    // Set when either input norm fell below epsilon; value is then 0 so the
    // caller can treat the pair as non-conflicting.
    bool degenerate = false;
};

CosineResult cosine_similarity(const DenseVector& a, const DenseVector& b,
                               double epsilon = kNormEpsilon);

// Concatenates tensors in manifest order. Names and dims must match exactly.
FlatGradient flatten(const NamedTensors& tensors, const ShapeManifest& manifest);

// Exact inverse of flatten.
NamedTensors reshape(const FlatGradient& flat, const ShapeManifest& manifest);

// y += alpha * x
void axpy(double alpha, const DenseVector& x, DenseVector& y);

DenseVector add(const DenseVector& a, const DenseVector& b);
DenseVector scale(double alpha, const DenseVector& a);

bool all_finite(const DenseVector& a);

}  // namespace gradharmony
