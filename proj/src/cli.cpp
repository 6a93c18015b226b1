#include "tensorql/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "tensorql/cardinality.hpp"
#include "tensorql/cp_decomp.hpp"
#include "tensorql/query_engine.hpp"

namespace tensorql::cli {

namespace {

namespace fs = std::filesystem;

std::uint64_t default_seed() {
  if (const char* s = std::getenv("TENSORQL_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw Error(std::string("TENSORQL_SEED is not a number: ") + s);
    }
  }
  return 42;
}

// alias=path lines, in load order.
std::vector<std::pair<std::string, std::string>> read_session(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) continue;
    out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return out;
}

void write_session(const std::string& path, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& [alias, file] : entries) out << alias << "=" << file << "\n";
  if (!out) throw Error("cannot write session file " + path);
}

std::pair<std::string, std::string> split_binding(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw Error("expected alias=file, got " + spec);
  }
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

std::string read_text(const std::string& path, std::istream& in) {
  std::ostringstream buf;
  if (path == "-") {
    buf << in.rdbuf();
    return buf.str();
  }
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  buf << f.rdbuf();
  return buf.str();
}

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(6) << x;
  return s.str();
}

class Session {
 public:
  Session(std::string path, const std::vector<std::string>& graph_flags) : path_(std::move(path)) {
    for (const auto& g : graph_flags) entries_.push_back(split_binding(g));
    for (auto& e : read_session(path_)) {
      if (!find(e.first)) entries_.push_back(std::move(e));
    }
  }

  const std::pair<std::string, std::string>* find(const std::string& alias) const {
    for (const auto& e : entries_) {
      if (e.first == alias) return &e;
    }
    return nullptr;
  }

  std::shared_ptr<const Graph> graph(const std::string& alias) {
    if (auto it = cache_.find(alias); it != cache_.end()) return it->second;
    const auto* e = find(alias);
    if (!e) throw Error("unknown graph alias " + alias);
    auto g = std::make_shared<const Graph>(load_ntriples_file(e->second));
    cache_[alias] = g;
    return g;
  }

  GraphSet graphs() {
    GraphSet set;
    for (const auto& e : entries_) set.add(e.first, graph(e.first));
    return set;
  }

  void record(const std::string& alias, const std::string& file) {
    auto stored = read_session(path_);
    std::erase_if(stored, [&](const auto& e) { return e.first == alias; });
    stored.emplace_back(alias, file);
    write_session(path_, stored);
  }

 private:
  std::string path_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::shared_ptr<const Graph>> cache_;
};

std::string dims_text(const std::array<Index, 3>& d) {
  return std::to_string(d[0]) + " x " + std::to_string(d[1]) + " x " + std::to_string(d[2]);
}

void print_solutions(const SolutionSequence& s, const std::string& format, std::ostream& out) {
  if (format == "jsonl") {
    for (const auto& row : s.rows) {
      nlohmann::ordered_json obj = nlohmann::ordered_json::object();
      for (std::size_t v = 0; v < s.vars.size(); ++v) {
        if (row.values[v]) obj[s.vars[v]] = *row.values[v];
      }
      out << obj.dump() << "\n";
    }
    return;
  }
  for (std::size_t v = 0; v < s.vars.size(); ++v) out << (v ? "\t?" : "?") << s.vars[v];
  out << "\n";
  for (const auto& row : s.rows) {
    for (std::size_t v = 0; v < row.values.size(); ++v) {
      if (v) out << "\t";
      if (row.values[v]) out << *row.values[v];
    }
    out << "\n";
  }
}

std::string step_text(const PlanStep& s) {
  std::string t = s.label();
  if (s.op == PlanStep::Op::Scan) {
    t += " " + to_string(s.triple.pattern);
    if (!s.triple.graph.empty()) t += " from " + s.triple.graph;
    return t;
  }
  t += "(";
  for (std::size_t i = 0; i < s.inputs.size(); ++i) t += (i ? ", " : "") + std::to_string(s.inputs[i]);
  t += ")";
  if (s.op == PlanStep::Op::Join || s.op == PlanStep::Op::LeftJoin) {
    t += " " + s.join_case.describe();
  } else if (s.op != PlanStep::Op::Union) {
    t += " on {?" + s.join_case.shared.at(0) + "}";
  }
  return t;
}

std::string estimate_text(const EstimateBundle& b) {
  if (!b.supported) return "none (" + b.note + ")";
  std::string t;
  for (const auto& e : b.estimates) {
    if (!t.empty()) t += ", ";
    t += std::string(to_string(e.kind)) + " " + fmt(e.value) + " [" + e.label + ", cost " + std::to_string(e.cost) + "]";
  }
  return t;
}

std::string solution_key(const Solution& row) {
  std::string key;
  for (const auto& v : row.values) {
    key += v ? *v : std::string("\x1e");
    key += '\x1f';
  }
  return key;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Boolean tensor RDF store and SPARQL subset engine", "tensorql"};
  app.require_subcommand(1);
  std::string session_path = ".tensorql_session";
  std::vector<std::string> graph_flags;
  app.add_option("--session", session_path, "Session file remembering loaded graphs");
  app.add_option("--graph", graph_flags, "Graph binding alias=file (repeatable)");

  std::string alias, file, format = "tsv";
  auto* load = app.add_subcommand("load", "Load an N-Triples file under an alias");
  load->add_option("alias", alias)->required();
  load->add_option("file", file)->required();

  auto* stats = app.add_subcommand("stats", "Dimensions, sparsity and marginal totals of a graph");
  stats->add_option("alias", alias)->required();

  auto* query = app.add_subcommand("query", "Evaluate a query file ('-' for stdin)");
  query->add_option("file", file)->required();
  query->add_option("--format", format)->check(CLI::IsMember({"tsv", "jsonl"}));

  bool check = false;
  auto* explain = app.add_subcommand("explain", "Show the join plan with cardinality estimates");
  explain->add_option("file", file)->required();
  explain->add_flag("--check", check, "Execute and print actual counts");

  Index rank = 0;
  std::uint64_t seed = 0;
  bool naive = false, reduce = false, overcover = false;
  std::string export_dir;
  auto* decompose = app.add_subcommand("decompose", "Boolean CP decomposition of a graph tensor");
  decompose->add_option("alias", alias)->required();
  decompose->add_option("--rank", rank, "Target rank");
  auto* seed_opt = decompose->add_option("--seed", seed, "Random seed");
  decompose->add_flag("--naive", naive, "Use the exact unfolding construction");
  decompose->add_flag("--reduce", reduce, "Drop redundant components of an exact result");
  decompose->add_flag("--overcover", overcover, "Allow blocks to cover zeros");
  decompose->add_option("--export", export_dir, "Write factor files to this directory");

  std::size_t sketch = 0;
  std::uint64_t sketch_seed = kDefaultHashSeed;
  auto* estimate = app.add_subcommand("estimate-distinct", "KMV estimate of a query's distinct solutions");
  estimate->add_option("file", file)->required();
  estimate->add_option("--sketch", sketch, "Sketch size k")->required()->check(CLI::Range(16, 1 << 24));
  estimate->add_option("--seed", sketch_seed, "Hash seed");
  estimate->add_flag("--check", check, "Also print the exact count");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    Session session(session_path, graph_flags);
    if (*load) {
      Graph g = load_ntriples_file(file);
      session.record(alias, fs::absolute(file).string());
      out << alias << ": " << g.size() << " triples, dims " << dims_text(g.tensor().dims()) << "\n";
      return 0;
    }
    if (*stats) {
      auto g = session.graph(alias);
      const auto& st = g->stats();
      out << "graph " << alias << "\n";
      out << "dims " << dims_text(g->tensor().dims()) << "\n";
      out << "nnz " << g->size() << "\n";
      out << "sparsity " << fmt(sparsity(g->tensor())) << "\n";
      const std::array<std::pair<const char*, const CountMatrix*>, 3> ms{
          {{"P", &st.by_subject}, {"Q", &st.by_predicate}, {"R", &st.by_object}}};
      std::size_t sum = 0;
      for (const auto& [name, m] : ms) {
        out << "marginal " << name << " " << m->rows() << " x " << m->cols() << " nnz " << m->nnz() << " total "
            << m->total() << "\n";
        sum += m->nnz();
      }
      out << "marginal nnz sum " << sum << " (3 nnz = " << 3 * g->size() << ")\n";
      return 0;
    }
    if (*query) {
      Query q = parse_query(read_text(file, in));
      GraphSet graphs = session.graphs();
      QueryResult r = run_query(q, graphs);
      if (const auto* s = std::get_if<SolutionSequence>(&r.value)) {
        print_solutions(*s, format, out);
      } else if (const auto* b = std::get_if<bool>(&r.value)) {
        out << (*b ? "true" : "false") << "\n";
      } else {
        serialize_ntriples(std::get<Graph>(r.value), out);
      }
      return 0;
    }
    if (*explain) {
      Query q = parse_query(read_text(file, in));
      GraphSet graphs = session.graphs();
      JoinPlan p = plan(q, graphs);
      std::vector<AlgebraicResult> results;
      if (check) results = execute(p, graphs);
      for (std::size_t i = 0; i < p.steps.size(); ++i) {
        out << "step " << i << ": " << step_text(p.steps[i]) << "\n";
        out << "  estimate: " << estimate_text(estimate_join(p, i, graphs)) << "\n";
        if (check) out << "  actual: " << results[i].nnz() << "  " << results[i].shape() << "\n";
      }
      return 0;
    }
    if (*decompose) {
      auto g = session.graph(alias);
      const BoolTensor3& t = g->tensor();
      if (!*seed_opt) seed = default_seed();
      CPFactors f;
      std::string method;
      if (naive) {
        f = naive_decomposition(t);
        method = "naive";
      } else {
        if (rank == 0) throw Error("decompose needs --rank >= 1 unless --naive is given");
        GreedyOptions opts;
        opts.seed = seed;
        opts.allow_overcover = overcover;
        f = greedy_cp(t, rank, opts).factors;
        method = "greedy";
      }
      if (reduce) {
        if (reconstruct(f) != t) throw Error("--reduce needs an exact decomposition");
        f = reduce_to_irreducible(f, t);
      }
      const DecompReport rep = verify_sparsity(f, t);
      out << "method " << method << "\n";
      if (!naive) out << "seed " << seed << "\n";
      out << "rank " << rep.rank << "\n";
      out << "exact " << (rep.exact ? "true" : "false") << "\n";
      out << "covered " << rep.covered << " / " << rep.nnz_target << "\n";
      out << "overcovered " << rep.overcovered << "\n";
      out << "factor nnz " << rep.nnz_factors << " (3|T| = " << 3 * rep.nnz_target << ", "
          << (rep.factor_count_bound ? "within" : "exceeds") << ")\n";
      out << "sparsity A " << fmt(rep.sA) << " B " << fmt(rep.sB) << " C " << fmt(rep.sC) << " T " << fmt(rep.sT)
          << "\n";
      out << "sparsity sum >= s(T) " << (rep.sparsity_bound ? "true" : "false") << "\n";
      out << "irreducible " << (rep.irreducible ? "true" : "false") << "\n";
      if (!export_dir.empty()) {
        export_factors(f, export_dir, naive ? 0 : seed, method);
        out << "exported " << export_dir << "\n";
      }
      return 0;
    }
    if (*estimate) {
      Query q = parse_query(read_text(file, in));
      GraphSet graphs = session.graphs();
      JoinPlan p = plan_pattern(q.where, graphs);
      auto results = execute(p, graphs);
      const SolutionSequence sols = decode_solutions(results.back(), q.result_vars());
      KmvSketch kmv(sketch, sketch_seed);
      for (const auto& row : sols.rows) kmv.add(solution_key(row));
      out << "kmv estimate " << fmt(kmv.estimate()) << " (k " << sketch << ", " << sols.rows.size()
          << " solutions hashed)\n";
      if (check) out << "exact " << project_distinct(results.back(), q.result_vars()).nnz() << "\n";
      return 0;
    }
  } catch (const UnsupportedFeature& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace tensorql::cli
