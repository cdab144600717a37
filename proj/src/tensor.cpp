#include "quadtrack/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <omp.h>
#include <sstream>

namespace quadtrack {

namespace {

int64_t checked_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 1) throw ShapeError("tensor dimension must be >= 1, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

int resolve_worker_cap() {
    if (const char* env = std::getenv("QUADTRACK_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return std::min(v, omp_get_max_threads());
    }
    return omp_get_max_threads();
}

int g_thread_override = 0;

}  // namespace

int worker_threads() {
    if (g_thread_override > 0) return g_thread_override;
    static const int cap = resolve_worker_cap();
    return cap;
}

void set_worker_threads(int n) { g_thread_override = n > 0 ? n : 0; }

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    numel_ = checked_numel(shape_);
    data_.assign(static_cast<size_t>(numel_), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    numel_ = checked_numel(shape_);
    if (static_cast<int64_t>(data_.size()) != numel_) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape product " + std::to_string(numel_));
    }
}

Tensor Tensor::full(std::vector<int> shape, float v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

Tensor Tensor::uniform(std::vector<int> shape, Rng& rng, float lo, float hi) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = rng.uniform(lo, hi);
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::require_finite(const char* where) const {
    if (!all_finite()) throw ShapeError(std::string(where) + ": non-finite value in result");
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

double sum64(const Tensor& t) {
    double s = 0.0;
    for (float v : t.vec()) s += v;
    return s;
}

double dot64(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ShapeError("dot64: length mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

double squared_distance(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) {
        throw ShapeError("squared_distance: width mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s;
}

double euclidean_distance(const Tensor& a, const Tensor& b) { return std::sqrt(squared_distance(a, b)); }

}  // namespace quadtrack
