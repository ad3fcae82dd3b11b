#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace warpfuse {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double px, double py) : x(px), y(py) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double squared_norm() const { return x * x + y * y; }
    double norm() const { return std::sqrt(squared_norm()); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

// Dense H x W x C array of doubles, row-major, channel-interleaved.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(int height, int width, int channels, double fill = 0.0)
        : h_(height), w_(width), c_(channels) {
        if (height <= 0 || width <= 0 || channels <= 0) {
            throw std::invalid_argument("FeatureMap: dimensions must be positive");
        }
        data_.assign(static_cast<size_t>(height) * width * channels, fill);
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int c) { return data_[(static_cast<size_t>(y) * w_ + x) * c_ + c]; }
    double at(int y, int x, int c) const { return data_[(static_cast<size_t>(y) * w_ + x) * c_ + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const FeatureMap& o) const {
        return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

private:
    int h_ = 0;
    int w_ = 0;
    int c_ = 0;
    std::vector<double> data_;
};

// Single-channel map with values expected in [0,1].
struct SaliencyMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    SaliencyMap() = default;
    SaliencyMap(int h, int w, double fill = 0.0) : height(h), width(w) {
        if (h <= 0 || w <= 0) throw std::invalid_argument("SaliencyMap: dimensions must be positive");
        values.assign(static_cast<size_t>(h) * w, fill);
    }

    double& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return values.size(); }
};

// Thrown for unreadable, unwritable, or malformed files.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a control-point configuration cannot support a solve.
struct DegenerateGridError : std::invalid_argument {
    explicit DegenerateGridError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Thrown for malformed command lines.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace warpfuse
