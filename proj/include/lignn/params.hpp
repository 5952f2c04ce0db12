#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lignn/core.hpp"

namespace lignn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Named dense tensors. Used both for model parameters and for gradients, which
/// always share the parameter set's names and shapes.
class ParamSet {
public:
    using Map = std::map<std::string, Mat>;

    Mat& operator[](const std::string& name) { return tensors_[name]; }

    const Mat& at(const std::string& name) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw std::out_of_range("ParamSet: no tensor '" + name + "'");
        return it->second;
    }
    Mat& at(const std::string& name) {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw std::out_of_range("ParamSet: no tensor '" + name + "'");
        return it->second;
    }

    bool contains(const std::string& name) const { return tensors_.contains(name); }
    std::size_t count() const noexcept { return tensors_.size(); }

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }

    /// Total number of scalar entries.
    std::size_t size() const {
        std::size_t n = 0;
        for (auto& [_, m] : tensors_) n += static_cast<std::size_t>(m.size());
        return n;
    }

    ParamSet zeros_like() const {
        ParamSet z;
        for (auto& [k, m] : tensors_) z.tensors_[k] = Mat::Zero(m.rows(), m.cols());
        return z;
    }

    bool same_shape(const ParamSet& o) const {
        if (tensors_.size() != o.tensors_.size()) return false;
        for (auto& [k, m] : tensors_) {
            auto it = o.tensors_.find(k);
            if (it == o.tensors_.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols())
                return false;
        }
        return true;
    }

    /// this += scale * other (shapes must match).
    void add_scaled(const ParamSet& other, double scale) {
        if (!same_shape(other)) throw std::invalid_argument("ParamSet::add_scaled: shape mismatch");
        for (auto& [k, m] : tensors_) m.noalias() += scale * other.tensors_.at(k);
    }

    void scale(double s) {
        for (auto& [_, m] : tensors_) m *= s;
    }

    double squared_norm() const {
        double s = 0.0;
        for (auto& [_, m] : tensors_) s += m.squaredNorm();
        return s;
    }

    bool all_finite() const {
        for (auto& [_, m] : tensors_)
            if (!m.allFinite()) return false;
        return true;
    }

    friend bool operator==(const ParamSet& a, const ParamSet& b) {
        if (!a.same_shape(b)) return false;
        for (auto& [k, m] : a.tensors_)
            if (m != b.tensors_.at(k)) return false;
        return true;
    }

private:
    Map tensors_;
};

/// Checkpoint layout (little-endian):
///   "LGNN"  u32 version  u32 tensor_count
///   per tensor: u32 name_len, name bytes, u32 rank, u64 dims[rank], f64 data (row-major)
namespace checkpoint {

inline constexpr std::array<char, 4> kMagic{'L', 'G', 'N', 'N'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts not supported");
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("checkpoint: truncated file");
    return v;
}

}  // namespace detail

inline void write(std::ostream& out, const ParamSet& params) {
    out.write(kMagic.data(), kMagic.size());
    detail::put<std::uint32_t>(out, kVersion);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.count()));
    for (auto& [name, m] : params) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put<std::uint32_t>(out, 2);
        detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) detail::put<double>(out, m(r, c));
    }
    if (!out) throw Error("checkpoint: write failed");
}

inline ParamSet read(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw Error("checkpoint: bad magic");
    auto version = detail::get<std::uint32_t>(in);
    if (version != kVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
    auto count = detail::get<std::uint32_t>(in);
    ParamSet params;
    for (std::uint32_t t = 0; t < count; ++t) {
        auto len = detail::get<std::uint32_t>(in);
        if (len > (1u << 16)) throw Error("checkpoint: implausible name length");
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw Error("checkpoint: truncated file");
        auto rank = detail::get<std::uint32_t>(in);
        if (rank > 2) throw Error("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
        std::uint64_t dims[2] = {1, 1};
        for (std::uint32_t r = 0; r < rank; ++r) dims[r] = detail::get<std::uint64_t>(in);
        Mat m(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = detail::get<double>(in);
        params[name] = std::move(m);
    }
    return params;
}

}  // namespace checkpoint

}  // namespace lignn
