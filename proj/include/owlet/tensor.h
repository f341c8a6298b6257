// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors on a reverse-mode tape. The scalar type is a
// template parameter for the whole stack: training instantiates float,
// gradient checking instantiates double. A tape never mixes the two.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "owlet/errors.h"

namespace owlet {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {
template <typename S>
struct Storage {
    std::vector<S> data;
    std::vector<S> grad;  // empty until the first accumulation
    bool requires_grad = false;
};
}  // namespace detail

template <typename S>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, S fill = S(0)) : shape_(std::move(shape)) {
        validate_shape();
        st_ = std::make_shared<detail::Storage<S>>();
        st_->data.assign(static_cast<size_t>(shape_numel(shape_)), fill);
    }

    Tensor(Shape shape, std::vector<S> values) : shape_(std::move(shape)) {
        validate_shape();
        if (static_cast<std::int64_t>(values.size()) != shape_numel(shape_))
            throw dim_error("tensor: " + std::to_string(values.size()) +
                            " values for shape " + shape_str(shape_));
        st_ = std::make_shared<detail::Storage<S>>();
        st_->data = std::move(values);
    }

    static Tensor scalar(S v) { return Tensor({1}, std::vector<S>{v}); }

    bool defined() const { return static_cast<bool>(st_); }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
    std::int64_t size() const { return st_ ? static_cast<std::int64_t>(st_->data.size()) : 0; }

    S* data() { return st_->data.data(); }
    const S* data() const { return st_->data.data(); }
    std::vector<S>& values() { return st_->data; }
    const std::vector<S>& values() const { return st_->data; }

    S value() const {
        if (size() != 1) throw contract_error("value(): tensor is not scalar, shape " + shape_str(shape_));
        return st_->data[0];
    }

    bool requires_grad() const { return st_ && st_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        st_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return st_ && !st_->grad.empty(); }

    // Grad buffer, allocated zero-filled on first touch.
    S* grad_data() {
        if (st_->grad.empty()) st_->grad.assign(st_->data.size(), S(0));
        return st_->grad.data();
    }
    const std::vector<S>& grad() const { return st_->grad; }

    void zero_grad() {
        if (st_ && !st_->grad.empty()) std::fill(st_->grad.begin(), st_->grad.end(), S(0));
    }

    // Identity of the underlying buffer; the tape keys nodes on this.
    const void* key() const { return st_.get(); }

    // Deep copy with no grad state.
    Tensor clone() const {
        Tensor out(shape_, st_->data);
        return out;
    }

private:
    void validate_shape() const {
        if (shape_.empty()) throw dim_error("tensor: empty shape");
        for (int d : shape_)
            if (d <= 0) throw dim_error("tensor: nonpositive extent in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::shared_ptr<detail::Storage<S>> st_;
};

// Reverse-mode tape. Nodes are appended in forward order, which is a
// topological order by construction; backward walks them once in reverse,
// restricted to the ancestors of the loss. Grads accumulate additively into
// tensor grad buffers; call zero_grad between optimizer steps. reset()
// discards all recordings and leaf registrations, after which the tape is
// reusable. A tape and its recorded tensors belong to one thread during a
// forward/backward pass.
template <typename S>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape*& current() {
        thread_local Tape* cur = nullptr;
        return cur;
    }

    // Node id for a tensor, registering it as a leaf on first sight.
    int node_of(const Tensor<S>& t) {
        auto it = ids_.find(t.key());
        if (it != ids_.end()) return it->second;
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{nullptr, {}});
        ids_.emplace(t.key(), id);
        return id;
    }

    void record(const Tensor<S>& out, std::vector<int> inputs, std::function<void()> back) {
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{std::move(back), std::move(inputs)});
        ids_[out.key()] = id;
    }

    void backward(Tensor<S>& loss) {
        if (loss.size() != 1)
            throw contract_error("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
        auto it = ids_.find(loss.key());
        if (it == ids_.end())
            throw contract_error("backward: loss is not recorded on this tape");
        const int root = it->second;

        std::vector<char> reach(nodes_.size(), 0);
        std::vector<int> stack{root};
        reach[static_cast<size_t>(root)] = 1;
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            for (int in : nodes_[static_cast<size_t>(id)].inputs) {
                if (!reach[static_cast<size_t>(in)]) {
                    reach[static_cast<size_t>(in)] = 1;
                    stack.push_back(in);
                }
            }
        }

        loss.grad_data()[0] += S(1);
        for (int id = root; id >= 0; --id) {
            if (reach[static_cast<size_t>(id)] && nodes_[static_cast<size_t>(id)].back)
                nodes_[static_cast<size_t>(id)].back();
        }
    }

    void reset() {
        nodes_.clear();
        ids_.clear();
    }

    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        std::function<void()> back;
        std::vector<int> inputs;
    };
    std::vector<Node> nodes_;
    std::unordered_map<const void*, int> ids_;
};

// RAII activation of a tape for the current thread.
template <typename S>
class TapeScope {
public:
    explicit TapeScope(Tape<S>& t) : prev_(Tape<S>::current()) { Tape<S>::current() = &t; }
    ~TapeScope() { Tape<S>::current() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<S>* prev_;
};

// Convenience: backward on the thread's active tape.
template <typename S>
void backward(Tensor<S>& loss) {
    Tape<S>* tp = Tape<S>::current();
    if (!tp) throw contract_error("backward: no active tape");
    tp->backward(loss);
}

}  // namespace owlet
