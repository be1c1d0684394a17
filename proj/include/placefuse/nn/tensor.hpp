#pragma once

// Dense 64-bit tensors with reverse-mode differentiation on a recorded tape.
// Ops live in ops.hpp; this header holds the storage types, the tape, the
// parameter registry and the seeded RNG used for deterministic init.

#include <cstdint>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace placefuse::nn {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << s[i] << (i + 1 < s.size() ? "," : "");
    os << ']';
    return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("tensor: negative dimension in " + shape_str(s));
        n *= d;
    }
    return n;
}

struct Tensor {
    Shape shape;
    std::vector<double> data;      // row-major
    std::vector<double> grad;      // empty until needed
    bool requires_grad = false;

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(Shape shape, double fill = 0.0) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(static_cast<size_t>(shape_numel(t->shape)), fill);
    return t;
}

inline TensorPtr make_tensor(Shape shape, std::vector<double> values) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(t->shape))
        throw std::invalid_argument("tensor: data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(t->shape));
    t->data = std::move(values);
    return t;
}

inline TensorPtr scalar_tensor(double v) { return make_tensor({1}, std::vector<double>{v}); }

// Reverse-mode tape. Ops append closures during the forward pass; backward()
// runs them in reverse and then frees the graph.
class Tape {
public:
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

    // Seeds d(loss)/d(loss) = 1 and propagates. The tape is cleared afterward.
    void backward(const TensorPtr& loss) {
        if (loss->size() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss->shape));
        loss->ensure_grad();
        loss->grad[0] += 1.0;
        run_reverse();
    }

    // Backward from an already-populated output gradient (used when a loss
    // computed on another tape feeds gradients into this one).
    void backward_from(const TensorPtr& output, const std::vector<double>& out_grad) {
        if (static_cast<std::int64_t>(out_grad.size()) != output->size())
            throw std::invalid_argument("backward_from: gradient size mismatch");
        output->ensure_grad();
        for (size_t i = 0; i < out_grad.size(); ++i) output->grad[i] += out_grad[i];
        run_reverse();
    }

    void clear() { nodes_.clear(); }
    size_t node_count() const { return nodes_.size(); }

private:
    void run_reverse() {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
        nodes_.clear();
    }
    std::vector<std::function<void()>> nodes_;
};

inline bool wants_grad(const Tape* tape, std::initializer_list<const TensorPtr*> inputs) {
    if (!tape) return false;
    for (const TensorPtr* t : inputs)
        if (*t && (*t)->requires_grad) return true;
    return false;
}

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 is bit-portable; the value mappings below are
// explicit so results never depend on libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Marsaglia polar method; deterministic given the stream.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below(0)");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = eng_(); } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Learnable parameter: a grad-carrying tensor plus identity and optimizer
// state. Momentum buffers live here so sgd_step stays a free function.
struct Parameter {
    TensorPtr tensor;
    std::string name;
    bool weight_decay_exempt = false;
    std::vector<double> momentum;  // allocated on first optimizer step
};

using ParameterPtr = std::shared_ptr<Parameter>;

enum class ParamInit { UniformFanIn, Zeros, Ones };

// Ordered registry of named parameters. Initialization is seeded per name so
// two models with the same seed share weights wherever names coincide.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    ParameterPtr create(const std::string& name, Shape shape, int fan_in,
                        ParamInit init = ParamInit::UniformFanIn, bool wd_exempt = false) {
        if (index_.count(name))
            throw std::invalid_argument("ParamStore: duplicate parameter name '" + name + "'");
        auto p = std::make_shared<Parameter>();
        p->name = name;
        p->weight_decay_exempt = wd_exempt;
        p->tensor = make_tensor(std::move(shape));
        p->tensor->requires_grad = true;
        switch (init) {
            case ParamInit::UniformFanIn: {
                if (fan_in <= 0)
                    throw std::invalid_argument("ParamStore: fan_in must be positive for '" + name + "'");
                const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
                Rng rng(fnv1a64(name) ^ seed_);
                for (double& v : p->tensor->data) v = rng.uniform(-bound, bound);
                break;
            }
            case ParamInit::Zeros:
                break;
            case ParamInit::Ones:
                std::fill(p->tensor->data.begin(), p->tensor->data.end(), 1.0);
                break;
        }
        index_[name] = params_.size();
        params_.push_back(p);
        return p;
    }

    ParameterPtr get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
        return params_[it->second];
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<ParameterPtr>& all() const { return params_; }
    size_t size() const { return params_.size(); }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::vector<ParameterPtr> params_;
    std::map<std::string, size_t> index_;
};

}  // namespace placefuse::nn
