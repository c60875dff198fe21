#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace coolcodec {

struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Malformed input data: bad magic, truncated payload, unparsable file.
struct FormatError : CodecError {
    using CodecError::CodecError;
};
// Incompatible shapes or invalid configuration.
struct ConfigError : CodecError {
    using CodecError::CodecError;
};
// Numerical failure during optimization (non-finite loss or gradient).
struct TrainingError : CodecError {
    using CodecError::CodecError;
};

enum class ParamRole { Latent, Weight, Bias };

// Value/gradient pair, the unit every layer kernel and optimizer works on.
struct ParamTensor {
    std::string name;
    ParamRole role = ParamRole::Weight;
    std::vector<int> shape;
    std::vector<float> v;
    std::vector<float> g;

    ParamTensor() = default;
    ParamTensor(std::string n, ParamRole r, std::vector<int> s)
        : name(std::move(n)), role(r), shape(std::move(s)) {
        size_t total = 1;
        for (int d : shape) total *= size_t(d);
        v.assign(total, 0.0f);
        g.assign(total, 0.0f);
    }

    size_t size() const { return v.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0f); }

    // Matrix interpretation: first shape dim is rows, rest fold into cols.
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return rows() == 0 ? 0 : int(size()) / rows(); }

    bool grad_finite() const {
        for (float x : g)
            if (!std::isfinite(x)) return false;
        return true;
    }
    bool values_finite() const {
        for (float x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// Non-owning matrix view over a ParamTensor (used by the optimizer).
struct MatView {
    float* v = nullptr;
    float* g = nullptr;
    int rows = 0;
    int cols = 0;
    const char* name = "";

    // 1-D tensors (biases, kernel taps) are treated as 1 x n matrices.
    static MatView of(ParamTensor& t) {
        if (t.shape.size() <= 1)
            return MatView{t.v.data(), t.g.data(), 1, int(t.size()), t.name.c_str()};
        return MatView{t.v.data(), t.g.data(), t.rows(), t.cols(), t.name.c_str()};
    }
    size_t size() const { return size_t(rows) * size_t(cols); }
};

}  // namespace coolcodec
