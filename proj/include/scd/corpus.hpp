#pragma once

// Builtin benchmark corpus: clone classes of small integer programs, shared
// trigger streams, trace emission, labels and differential testing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scd/error.hpp"
#include "scd/ground_truth.hpp"
#include "scd/random.hpp"
#include "scd/trace.hpp"

namespace scd {

/// Raised by a variant to model the program throwing; the invocation is
/// dropped from the trace.
struct ProgramThrew : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Maps the variant's input values (schema order) to its output values.
using VariantFn = std::function<std::vector<Value>(const std::vector<Value>&)>;

struct Variant {
  ExecutableSchema schema;
  VariantFn run;
  std::optional<std::string> conditional;  // documented input condition under which it diverges
};

/// One trigger element: values are drawn uniformly from the domain.
struct TriggerElement {
  std::string name;
  std::vector<Value> domain;
};

struct CloneClass {
  std::string name;
  std::vector<TriggerElement> triggers;
  std::vector<Variant> variants;
};

struct CorpusSpec {
  std::vector<CloneClass> classes;
};

namespace corpus_detail {

inline std::int64_t as_int(const Value& v) { return std::get<std::int64_t>(v); }

inline AtomicElement param(std::string name, DataType t = DataType::Integer) {
  return {std::move(name), ElementRole::ParameterIn, t};
}
inline AtomicElement result(std::string name = "result", DataType t = DataType::Integer) {
  return {std::move(name), ElementRole::ResultOut, t};
}

inline ExecutableSchema schema(std::string id, std::string owner, std::vector<AtomicElement> elements) {
  return {id, owner + "." + id, owner, std::move(elements)};
}

inline std::vector<Value> int_range(std::int64_t lo, std::int64_t hi) {
  std::vector<Value> out;
  for (auto v = lo; v <= hi; ++v) out.emplace_back(v);
  return out;
}

// Unary int -> T variant from a plain function.
template <class F>
Variant unary(std::string id, std::string owner, DataType out_type, F f) {
  return {schema(std::move(id), std::move(owner), {param("n"), result("result", out_type)}),
          [f](const std::vector<Value>& in) { return std::vector<Value>{Value(f(as_int(in.at(0))))}; },
          std::nullopt};
}

// factorial -----------------------------------------------------------------

inline std::int64_t factorial_for(std::int64_t n) {
  std::int64_t product = 1;
  for (std::int64_t i = 1; i <= n; ++i) product *= i;
  return product;
}

inline std::int64_t factorial_while(std::int64_t n) {
  std::int64_t product = 1;
  while (n > 1) product *= n--;
  return product;
}

inline std::int64_t factorial_recursive(std::int64_t n) { return n <= 1 ? 1 : n * factorial_recursive(n - 1); }

inline std::int64_t factorial_delegate(std::int64_t n, const std::string& guard) {
  if (n < 1) {
    if (guard == "val") return -1;
    if (guard == "throw") throw ProgramThrew("n must be positive");
  }
  return factorial_for(n);
}

// fibonacci -----------------------------------------------------------------

inline std::int64_t fibonacci_iterative(std::int64_t n) {
  std::int64_t a = 0, b = 1;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t next = a + b;
    a = b;
    b = next;
  }
  return a;
}

inline std::int64_t fibonacci_recursive(std::int64_t n) {
  return n < 2 ? n : fibonacci_recursive(n - 1) + fibonacci_recursive(n - 2);
}

inline std::int64_t fibonacci_binet(std::int64_t n) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  return static_cast<std::int64_t>(std::llround(std::pow(phi, static_cast<double>(n)) / std::sqrt(5.0)));
}

// sort (min / max summary of a 3-tuple) -------------------------------------

inline std::vector<Value> bubble_sort_summary(const std::vector<Value>& in) {
  std::int64_t xs[3] = {as_int(in[0]), as_int(in[1]), as_int(in[2])};
  for (int pass = 0; pass < 2; ++pass)
    for (int i = 0; i + 1 < 3 - pass; ++i)
      if (xs[i] > xs[i + 1]) std::swap(xs[i], xs[i + 1]);
  return {xs[0], xs[2]};
}

inline std::vector<Value> insertion_sort_summary(const std::vector<Value>& in) {
  std::vector<std::int64_t> xs;
  for (const auto& v : in) {
    const auto x = as_int(v);
    auto pos = xs.begin();
    while (pos != xs.end() && *pos <= x) ++pos;
    xs.insert(pos, x);
  }
  return {xs.front(), xs.back()};
}

// int -> int maps with identical marginals on {0..20} -----------------------

inline std::int64_t clamp_branch(std::int64_t n) { return n < 0 ? 0 : (n > 20 ? 20 : n); }
inline std::int64_t clamp_minmax(std::int64_t n) { return std::min<std::int64_t>(std::max<std::int64_t>(n, 0), 20); }

inline std::int64_t mirror_subtract(std::int64_t n) { return 20 - n; }
inline std::int64_t mirror_countdown(std::int64_t n) {
  std::int64_t r = 20;
  for (std::int64_t i = 0; i < n; ++i) --r;
  return r;
}

inline std::int64_t rotate_modulo(std::int64_t n) { return ((n + 7) % 21 + 21) % 21; }
inline std::int64_t rotate_branch(std::int64_t n) { return n + 7 > 20 ? n - 14 : n + 7; }

// int -> text / float -------------------------------------------------------

inline std::string parity_modulo(std::int64_t n) { return n % 2 == 0 ? "even" : "odd"; }
inline std::string parity_bitwise(std::int64_t n) { return (n & 1) ? "odd" : "even"; }

inline double halve_divide(std::int64_t n) { return static_cast<double>(n) / 2.0; }
inline double halve_multiply(std::int64_t n) { return 0.5 * static_cast<double>(n); }

}  // namespace corpus_detail

/// The builtin corpus: 19 variants in 8 clone classes.
inline CorpusSpec builtin_corpus() {
  using namespace corpus_detail;
  const TriggerElement n{"n", int_range(0, 20)};
  const DataType I = DataType::Integer;

  CorpusSpec spec;

  CloneClass factorial{"factorial", {n, {"guard", {Value("none"), Value("val"), Value("throw")}}}, {}};
  factorial.variants.push_back(unary("factorial_for", "Factorial", I, factorial_for));
  factorial.variants.push_back(unary("factorial_while", "Factorial", I, factorial_while));
  factorial.variants.push_back(unary("factorial_recursive", "Factorial", I, factorial_recursive));
  factorial.variants.push_back(
      {schema("factorial_delegate", "Factorial", {param("n"), param("guard", DataType::Text), result()}),
       [](const std::vector<Value>& in) {
         return std::vector<Value>{factorial_delegate(as_int(in.at(0)), std::get<std::string>(in.at(1)))};
       },
       "n < 1 with guard \"val\" returns -1 and with guard \"throw\" throws"});
  spec.classes.push_back(std::move(factorial));

  spec.classes.push_back({"fibonacci",
                          {n},
                          {unary("fibonacci_iterative", "Fibonacci", I, fibonacci_iterative),
                           unary("fibonacci_recursive", "Fibonacci", I, fibonacci_recursive),
                           unary("fibonacci_binet", "Fibonacci", I, fibonacci_binet)}});

  const std::vector<AtomicElement> sort_elements{param("x0"), param("x1"), param("x2"), result("first"),
                                                 result("last")};
  spec.classes.push_back({"sort",
                          {{"x0", int_range(0, 20)}, {"x1", int_range(0, 20)}, {"x2", int_range(0, 20)}},
                          {{schema("sort_bubble", "Sort", sort_elements), bubble_sort_summary, std::nullopt},
                           {schema("sort_insertion", "Sort", sort_elements), insertion_sort_summary, std::nullopt}}});

  spec.classes.push_back({"clamp",
                          {n},
                          {unary("clamp_branch", "Clamp", I, clamp_branch),
                           unary("clamp_minmax", "Clamp", I, clamp_minmax)}});
  spec.classes.push_back({"mirror",
                          {n},
                          {unary("mirror_subtract", "Mirror", I, mirror_subtract),
                           unary("mirror_countdown", "Mirror", I, mirror_countdown)}});
  spec.classes.push_back({"rotate",
                          {n},
                          {unary("rotate_modulo", "Rotate", I, rotate_modulo),
                           unary("rotate_branch", "Rotate", I, rotate_branch)}});
  spec.classes.push_back({"parity",
                          {n},
                          {unary("parity_modulo", "Parity", DataType::Text, parity_modulo),
                           unary("parity_bitwise", "Parity", DataType::Text, parity_bitwise)}});
  spec.classes.push_back({"halve",
                          {n},
                          {unary("halve_divide", "Halve", DataType::Float, halve_divide),
                           unary("halve_multiply", "Halve", DataType::Float, halve_multiply)}});
  return spec;
}

inline GroundTruth ground_truth(const CorpusSpec& spec) {
  GroundTruth t;
  for (const auto& c : spec.classes)
    for (const auto& v : c.variants)
      if (!t.labels.emplace(v.schema.id, c.name).second)
        throw Error(Errc::DuplicateId, "variant id \"" + v.schema.id + "\" appears twice");
  return t;
}

/// Named trigger values for one invocation of a class.
using Trigger = std::map<std::string, Value>;

/// The shared trigger stream of one class. Overrides pin named elements.
inline std::vector<Trigger> trigger_stream(const CloneClass& c, std::size_t n, std::uint64_t seed,
                                           const Trigger& overrides = {}) {
  Rng rng(derive_seed(seed, "trigger:" + c.name));
  std::vector<Trigger> out(n);
  for (auto& t : out) {
    for (const auto& e : c.triggers) {
      std::uniform_int_distribution<std::size_t> pick(0, e.domain.size() - 1);
      const Value drawn = e.domain.at(pick(rng));
      auto it = overrides.find(e.name);
      t[e.name] = it == overrides.end() ? drawn : it->second;
    }
  }
  return out;
}

namespace corpus_detail {

inline std::vector<Value> variant_inputs(const Variant& v, const Trigger& t) {
  std::vector<Value> in;
  for (auto idx : io_elements(v.schema).inputs) {
    auto it = t.find(v.schema.elements[idx].name);
    if (it == t.end())
      throw Error(Errc::InvalidArgument,
                  "variant " + v.schema.id + " input \"" + v.schema.elements[idx].name + "\" has no trigger");
    in.push_back(it->second);
  }
  return in;
}

/// Runs one invocation; nullopt when the program threw.
inline std::optional<std::vector<Value>> invoke(const Variant& v, const std::vector<Value>& in) {
  try {
    auto out = v.run(in);
    if (out.size() != io_elements(v.schema).outputs.size())
      throw Error(Errc::EvaluationError, v.schema.id + ": wrong number of outputs");
    return out;
  } catch (const ProgramThrew&) {
    return std::nullopt;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(Errc::EvaluationError, v.schema.id + ": " + e.what());
  }
}

}  // namespace corpus_detail

/// One trace per variant. Every variant of a class sees the same trigger
/// sequence; invocations that throw are left out.
inline std::map<std::string, TraceDataset> generate_traces(const CorpusSpec& spec, std::size_t n,
                                                           std::uint64_t seed) {
  if (n < 1) throw Error(Errc::InvalidArgument, "need at least one invocation per variant");
  std::map<std::string, TraceDataset> out;
  for (const auto& c : spec.classes) {
    const auto stream = trigger_stream(c, n, seed);
    for (const auto& v : c.variants) {
      TraceDataset ds{v.schema, {}};
      const auto io = io_elements(v.schema);
      for (const auto& t : stream) {
        const auto in = corpus_detail::variant_inputs(v, t);
        const auto result = corpus_detail::invoke(v, in);
        if (!result) continue;
        Row row(v.schema.elements.size());
        for (std::size_t k = 0; k < io.inputs.size(); ++k) row[io.inputs[k]] = in[k];
        for (std::size_t k = 0; k < io.outputs.size(); ++k) row[io.outputs[k]] = (*result)[k];
        ds.rows.push_back(std::move(row));
      }
      if (ds.rows.empty()) throw Error(Errc::EvaluationError, v.schema.id + ": every invocation threw");
      validate_dataset(ds, v.schema.id);
      if (!out.emplace(v.schema.id, std::move(ds)).second)
        throw Error(Errc::DuplicateId, "variant id \"" + v.schema.id + "\" appears twice");
    }
  }
  return out;
}

struct Divergence {
  std::string reference;
  std::string variant;
  std::size_t trigger_index = 0;
  Trigger trigger;
  bool threw = false;
  bool conditional = false;  // variant documents a condition covering this divergence
};

struct ClassCheck {
  std::string name;
  std::size_t samples = 0;
  std::vector<Divergence> divergences;
};

struct DifferentialReport {
  std::vector<ClassCheck> classes;

  std::size_t total_divergences() const {
    std::size_t n = 0;
    for (const auto& c : classes) n += c.divergences.size();
    return n;
  }
};

/// Compares every variant of each class with the class's first variant on
/// the shared trigger stream. Divergences are reported, never thrown.
inline DifferentialReport differential_check(const CorpusSpec& spec, std::size_t samples, std::uint64_t seed,
                                             const Trigger& overrides = {}) {
  DifferentialReport report;
  for (const auto& c : spec.classes) {
    ClassCheck check{c.name, samples, {}};
    const auto stream = trigger_stream(c, samples, seed, overrides);
    if (c.variants.empty()) continue;
    const Variant& ref = c.variants.front();
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const auto expected = corpus_detail::invoke(ref, corpus_detail::variant_inputs(ref, stream[i]));
      for (std::size_t k = 1; k < c.variants.size(); ++k) {
        const Variant& v = c.variants[k];
        const auto got = corpus_detail::invoke(v, corpus_detail::variant_inputs(v, stream[i]));
        if (got == expected) continue;
        check.divergences.push_back({ref.schema.id, v.schema.id, i, stream[i], !got.has_value(),
                                     v.conditional.has_value() || ref.conditional.has_value()});
      }
    }
    report.classes.push_back(std::move(check));
  }
  return report;
}

}  // namespace scd
