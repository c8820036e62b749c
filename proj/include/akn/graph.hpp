#pragma once

#include "akn/tensor.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace akn {

// Named parameter store, iteration in insertion order.
template <typename T>
class Parameters {
public:
    std::size_t add(const std::string& name, Tensor<T> value)
    {
        if (index_.count(name))
            throw std::invalid_argument("duplicate parameter: " + name);
        index_.emplace(name, names_.size());
        names_.push_back(name);
        values_.push_back(std::move(value));
        return names_.size() - 1;
    }

    void set(const std::string& name, Tensor<T> value)
    {
        auto it = index_.find(name);
        if (it == index_.end()) {
            add(name, std::move(value));
            return;
        }
        values_[it->second] = std::move(value);
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t index_of(const std::string& name) const
    {
        auto it = index_.find(name);
        if (it == index_.end())
            throw std::out_of_range("no such parameter: " + name);
        return it->second;
    }

    Tensor<T>& at(const std::string& name) { return values_[index_of(name)]; }
    const Tensor<T>& at(const std::string& name) const { return values_[index_of(name)]; }
    Tensor<T>& at(std::size_t i) { return values_.at(i); }
    const Tensor<T>& at(std::size_t i) const { return values_.at(i); }

    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }

    std::size_t element_count() const
    {
        std::size_t n = 0;
        for (const auto& v : values_)
            n += v.size();
        return n;
    }

    template <typename U>
    Parameters<U> cast() const
    {
        Parameters<U> out;
        for (std::size_t i = 0; i < names_.size(); ++i)
            out.add(names_[i], values_[i].template cast<U>());
        return out;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Per-parameter gradients, indexed like the Parameters store they came from.
// Entries stay empty for parameters the output does not reach.
template <typename T>
using Gradients = std::vector<std::optional<Tensor<T>>>;

// Tape of operator records. Nodes are appended in evaluation order, so every
// input id precedes the node that consumes it.
template <typename T>
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, const Tensor<T>& out_grad)>;

    struct Node {
        std::string op;
        std::vector<int> inputs;
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        int param = -1;
        BackwardFn backward;
    };

    explicit Graph(const Parameters<T>* params = nullptr)
    : params_(params)
    {
    }

    // Parameters whose names appear here are read as constants.
    void freeze(std::unordered_set<std::string> names) { frozen_ = std::move(names); }

    Var constant(Tensor<T> value)
    {
        Node n;
        n.op = "constant";
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size() - 1)};
    }

    Var param(const std::string& name)
    {
        if (!params_)
            throw std::logic_error("graph has no parameter store");
        const std::size_t idx = params_->index_of(name);
        if (auto it = param_nodes_.find(idx); it != param_nodes_.end())
            return Var{it->second};
        Node n;
        n.op = "param:" + name;
        n.value = params_->at(idx);
        n.param = static_cast<int>(idx);
        n.requires_grad = !frozen_.count(name);
        nodes_.push_back(std::move(n));
        const int id = static_cast<int>(nodes_.size() - 1);
        param_nodes_.emplace(idx, id);
        return Var{id};
    }

    Var record(std::string op, std::vector<Var> inputs, Tensor<T> value, BackwardFn backward)
    {
        Node n;
        n.op = std::move(op);
        for (Var v : inputs) {
            check(v);
            n.inputs.push_back(v.id);
            n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
        }
        n.value = std::move(value);
        if (n.requires_grad)
            n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size() - 1)};
    }

    const Tensor<T>& value(Var v) const
    {
        check(v);
        return nodes_[v.id].value;
    }

    bool requires_grad(Var v) const
    {
        check(v);
        return nodes_[v.id].requires_grad;
    }

    // Add `g` into the gradient slot of `v`. No-op for nodes without requires_grad.
    void accumulate(Var v, const Tensor<T>& g)
    {
        check(v);
        Node& n = nodes_[v.id];
        if (!n.requires_grad)
            return;
        if (n.grad.empty())
            n.grad = g;
        else
            n.grad += g;
    }

    void accumulate(Var v, Tensor<T>&& g)
    {
        check(v);
        Node& n = nodes_[v.id];
        if (!n.requires_grad)
            return;
        if (n.grad.empty())
            n.grad = std::move(g);
        else
            n.grad += g;
    }

    // Reverse sweep from a scalar output. Returns d(output)/d(parameter) for
    // every parameter the output reaches.
    Gradients<T> backward(Var output)
    {
        check(output);
        if (nodes_[output.id].value.size() != 1)
            throw ShapeError("backward requires a scalar output, got " +
                             dims_to_string(nodes_[output.id].value.dims()));
        for (auto& n : nodes_)
            n.grad = Tensor<T>();
        Gradients<T> grads(params_ ? params_->size() : 0);
        if (!nodes_[output.id].requires_grad)
            return grads;
        nodes_[output.id].grad = Tensor<T>(nodes_[output.id].value.dims(), T{1});
        for (int id = output.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.grad.empty() || !n.requires_grad)
                continue;
            if (n.param >= 0) {
                grads[n.param] = std::move(n.grad);
                continue;
            }
            if (n.backward) {
                Tensor<T> g = std::move(n.grad);
                n.backward(*this, g);
            }
        }
        return grads;
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const Parameters<T>* parameters() const { return params_; }

private:
    void check(Var v) const
    {
        if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw std::out_of_range("invalid graph variable " + std::to_string(v.id));
    }

    const Parameters<T>* params_ = nullptr;
    std::vector<Node> nodes_;
    std::unordered_map<std::size_t, int> param_nodes_;
    std::unordered_set<std::string> frozen_;
};

} // namespace akn
