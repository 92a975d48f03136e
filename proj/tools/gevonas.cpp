// Command-line front end. Exit codes: 0 success, 1 usage, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "gevo/config.hpp"
#include "gevo/engine.hpp"
#include "gevo/error.hpp"
#include "gevo/harness.hpp"

namespace fs = std::filesystem;
using namespace gevo;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

RunConfig load(const Common& common) {
    RunConfig rc = common.config_path.empty() ? RunConfig{} : load_config(common.config_path);
    if (common.seed) rc.engine.seed = *common.seed;
    validate(rc.engine);
    return rc;
}

fs::path out_path(const Common& common, const std::string& name) {
    fs::create_directories(common.out_dir);
    return fs::path(common.out_dir) / name;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string history_csv(const SearchState& st) {
    std::string out = generation_csv_header() + "\n";
    for (const auto& row : st.history) out += generation_csv_row(row) + "\n";
    return out;
}

std::string population_text(const Population& pop) {
    std::string out;
    for (const auto& ind : pop) {
        out += "# id " + id_hex(ind.id) + " front " + std::to_string(ind.front);
        if (ind.potential) {
            std::ostringstream m;
            m.precision(10);
            m << " exp_acc " << ind.potential->exp_acc << " exp_size " << ind.potential->exp_size;
            out += m.str();
        }
        out += "\n" + write_genome_text(ind.genome) + "\n";
    }
    return out;
}

// Runs to completion, checkpointing and rewriting the log after every
// generation so an interrupted run can resume from the last boundary.
int drive(SearchEngine& engine, const Common& common) {
    const fs::path ckpt = out_path(common, "checkpoint.bin");
    const fs::path csv = out_path(common, "generations.csv");
    engine.run([&](const SearchState& st) {
        engine.save_checkpoint(ckpt.string());
        write_file(csv, history_csv(st));
        if (st.generation > 0) {
            double best = 0;
            for (const auto& ind : st.population) best = std::max(best, ind.fitness().exp_acc);
            std::cerr << "stage " << st.stage << " generation " << st.generation << " best exp_acc " << best << "\n";
        }
    });
    const FinalReport report = engine.report();
    write_file(out_path(common, "report.json"), report.to_json(engine.model().opset));
    write_file(out_path(common, "final_population.txt"), population_text(report.population));
    if (engine.state().supernet) save_supernet(out_path(common, "supernet.bin").string(), *engine.state().supernet);
    std::cout << "config digest " << id_hex(report.config_digest) << "\n"
              << "report digest " << id_hex(report.digest()) << "\n"
              << "pareto size " << report.pareto.size() << "\n"
              << "outputs in " << common.out_dir << "\n";
    return 0;
}

int cmd_search(const Common& common) {
    const RunConfig rc = load(common);
    const auto [train, val] = make_datasets(rc.engine);
    SearchEngine engine(rc.engine, train, val);
    return drive(engine, common);
}

int cmd_resume(const Common& common, std::string checkpoint) {
    const RunConfig rc = load(common);
    const auto [train, val] = make_datasets(rc.engine);
    if (checkpoint.empty()) checkpoint = (fs::path(common.out_dir) / "checkpoint.bin").string();
    SearchEngine engine = SearchEngine::resume(checkpoint, rc.engine, train, val);
    std::cerr << "resumed at stage " << engine.state().stage << " generation " << engine.state().generation << "\n";
    return drive(engine, common);
}

int cmd_rank_study(const Common& common) {
    const RunConfig rc = load(common);
    const auto [train, val] = make_datasets(rc.engine);
    const StudyReport report = rank_study(rc, train, val, [](const std::string& m) { std::cerr << m << "\n"; });
    write_file(out_path(common, "rank_study.csv"), report.to_csv());
    for (const auto& s : report.seeds) {
        std::cout << "seed " << s.seed << " tau_pruned " << s.tau_pruned << " tau_oneshot " << s.tau_oneshot
                  << " steps " << s.pruned_steps << "/" << s.oneshot_steps << "\n";
    }
    std::cout << "pruned >= one-shot in " << report.pruned_wins() << "/" << report.seeds.size() << " seeds\n"
              << "mean tau pruned " << report.mean_tau_pruned() << " one-shot " << report.mean_tau_oneshot() << "\n";
    return 0;
}

int cmd_bruteforce(const Common& common, std::optional<int> blocks, std::optional<int> ops) {
    RunConfig rc = load(common);
    if (blocks) rc.engine.blocks = *blocks;
    if (ops) rc.engine.ops = *ops;
    validate(rc.engine);
    const ModelSpec model{make_skeleton(rc.engine), make_opset(rc.engine), rc.engine.shape};
    const BruteForceResult r = brute_force_surrogate(model, rc.engine.surrogate_seed);
    std::cout << "networks " << r.networks << "\n"
              << "argmax " << id_hex(canonical_hash(r.best)) << " score " << r.best_score << "\n"
              << "argmax is planted target: " << (r.best_is_target ? "yes" : "no") << "\n"
              << "top-1% threshold " << r.top1_threshold << "\n";
    return 0;
}

int cmd_eval(const Common& common, const std::string& genome_path, const std::string& supernet_path) {
    const RunConfig rc = load(common);
    const EngineConfig& c = rc.engine;
    const ModelSpec model{make_skeleton(c), make_opset(c), c.shape};
    const NetworkGenome g = read_genome_text(read_file(genome_path), model.skeleton, model.opset.size());
    Rng rng = derive_rng(c.seed, 0x6576616cULL);  // "eval"
    PotentialEstimate p;
    if (c.evaluator == EvaluatorKind::Surrogate) {
        p = SurrogateEvaluator(model, c.surrogate_seed).assess(g, c.samples, rng);
    } else {
        const auto [train, val] = make_datasets(c);
        if (c.evaluator == EvaluatorKind::Shared) {
            if (supernet_path.empty()) throw ConfigError("eval with evaluator.kind = shared needs --supernet");
            const SuperNet net = load_supernet(supernet_path);
            p = SharedWeightEvaluator(net, val, 0, c.eval_batch_size).assess(g, c.samples, rng);
        } else {
            const ScratchOptions opts{.epochs = c.scratch_epochs,
                                      .lr_max = c.lr,
                                      .momentum = c.momentum,
                                      .weight_decay = c.weight_decay,
                                      .batch_size = c.batch_size,
                                      .eval_batch_size = c.eval_batch_size,
                                      .grad_clip = c.grad_clip};
            p = ScratchEvaluator(model, train, val, opts).assess(g, c.samples, rng);
        }
    }
    std::cout << "id " << id_hex(canonical_hash(g)) << "\n"
              << "blocks " << g.size() << "/" << model.skeleton.blocks() << "\n"
              << "evaluator " << evaluator_name(c.evaluator) << "\n"
              << "exp_acc " << p.exp_acc << "\n"
              << "exp_size " << p.exp_size << "\n"
              << "n_samples " << p.n_samples << "\n";
    return 0;
}

int cmd_export_dot(const Common& common, const std::string& genome_path, const std::string& out) {
    const RunConfig rc = load(common);
    const OpSet opset = make_opset(rc.engine);
    const NetworkGenome g = read_genome_text(read_file(genome_path), make_skeleton(rc.engine), opset.size());
    const auto names = opset.names();
    const std::string dot = export_dot(g, names);
    if (out.empty()) {
        std::cout << dot;
    } else {
        write_file(out, dot);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Growth-based evolutionary architecture search with a progressively pruned supernet"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("--config", common.config_path, "Config file (section.key = value lines)");
    app.add_option("--seed", common.seed, "Override search.seed");
    app.add_option("--out-dir", common.out_dir, "Directory for reports, logs and checkpoints");

    auto* search = app.add_subcommand("search", "Run the search; writes report.json, generations.csv, checkpoint.bin");
    auto* resume = app.add_subcommand("resume", "Continue a search from its checkpoint");
    std::string checkpoint;
    resume->add_option("--checkpoint", checkpoint, "Checkpoint file (default: <out-dir>/checkpoint.bin)");
    auto* study = app.add_subcommand("rank-study", "Ranking fidelity of pruned vs one-shot supernets");
    auto* brute = app.add_subcommand("bruteforce", "Exhaustive surrogate landscape of a tiny space");
    std::optional<int> blocks, ops;
    brute->add_option("--blocks", blocks, "Override search.blocks");
    brute->add_option("--ops", ops, "Override space.ops");
    auto* eval = app.add_subcommand("eval", "Assess one genome file with the configured evaluator");
    std::string genome_path, supernet_path;
    eval->add_option("--genome", genome_path, "Genome text file")->required();
    eval->add_option("--supernet", supernet_path, "Saved supernet (shared evaluator)");
    auto* dot = app.add_subcommand("export-dot", "Render a genome file as Graphviz DOT");
    std::string dot_genome, dot_out;
    dot->add_option("--genome", dot_genome, "Genome text file")->required();
    dot->add_option("--out", dot_out, "Output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (search->parsed()) return cmd_search(common);
        if (resume->parsed()) return cmd_resume(common, checkpoint);
        if (study->parsed()) return cmd_rank_study(common);
        if (brute->parsed()) return cmd_bruteforce(common, blocks, ops);
        if (eval->parsed()) return cmd_eval(common, genome_path, supernet_path);
        if (dot->parsed()) return cmd_export_dot(common, dot_genome, dot_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
