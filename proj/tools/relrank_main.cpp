// Command-line front end: generate -> label -> train -> eval -> sweep -> score.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "relrank/commands.hpp"

namespace {

relrank::ValueWeights weights_from_flags(double alpha, double beta, double gamma) {
    relrank::ValueWeights w;
    w.alpha = alpha;
    w.beta = beta;
    w.gamma = gamma;
    w.validate();
    return w;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"relrank: multi-task relevance/engagement ranking engine"};
    app.require_subcommand(1);

    // generate
    std::string gen_config, gen_out;
    bool gen_print_config = false;
    auto* generate = app.add_subcommand("generate", "synthesize a dataset from a config file");
    generate->add_option("--config", gen_config, "generator config (key = value)");
    generate->add_option("--out", gen_out, "output dataset JSONL path");
    generate->add_flag("--print-config", gen_print_config,
                       "print a complete default config and exit");

    // label
    std::string label_dataset, label_config, label_out;
    auto* label = app.add_subcommand("label", "run the label refinement pipeline");
    label->add_option("--dataset", label_dataset, "dataset JSONL path")->required();
    label->add_option("--config", label_config, "pipeline config (key = value)")->required();
    label->add_option("--out", label_out, "output labels JSONL path")->required();

    // train
    std::string train_dataset, train_labels, train_config, train_out, train_head = "ordinal";
    std::string train_init_from;
    bool engagement_only = false;
    auto* train = app.add_subcommand("train", "fit the ranker and write a checkpoint");
    train->add_option("--dataset", train_dataset, "dataset JSONL path")->required();
    train->add_option("--labels", train_labels, "labels JSONL from the label command");
    train->add_option("--config", train_config, "training config (key = value)")->required();
    train->add_option("--head", train_head, "relevance head: ordinal|softmax3|regression");
    train->add_flag("--engagement-only", engagement_only,
                    "train with the relevance loss weight forced to zero");
    train->add_option("--init-from", train_init_from, "checkpoint to resume from");
    train->add_option("--out", train_out, "output checkpoint path")->required();

    // eval
    std::string eval_ckpt, eval_dataset, eval_out;
    double eval_alpha = 0.3, eval_beta = 0.3, eval_gamma = 0.3;
    bool eval_normalize_rel = false;
    std::size_t eval_k = 10;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--dataset", eval_dataset, "dataset JSONL path")->required();
    eval->add_option("--out", eval_out, "output report JSON path")->required();
    eval->add_option("--alpha", eval_alpha, "value weight on the click head");
    eval->add_option("--beta", eval_beta, "value weight on the add-to-cart head");
    eval->add_option("--gamma", eval_gamma, "value weight on the conversion head");
    eval->add_flag("--normalize-rel", eval_normalize_rel,
                   "divide the relevance scalar by 2 inside the value function");
    eval->add_option("--k", eval_k, "NDCG cutoff");

    // sweep
    std::string sweep_ckpt, sweep_dataset, sweep_grid = "0:1:0.1", sweep_out;
    std::size_t sweep_k = 10;
    auto* sweep = app.add_subcommand("sweep", "relevance/conversion trade-off curve");
    sweep->add_option("--checkpoint", sweep_ckpt, "checkpoint path")->required();
    sweep->add_option("--dataset", sweep_dataset, "dataset JSONL path")->required();
    sweep->add_option("--grid", sweep_grid, "lo:hi:step or comma-separated weights");
    sweep->add_option("--out", sweep_out, "output CSV path")->required();
    sweep->add_option("--k", sweep_k, "NDCG cutoff");

    // score
    std::string score_ckpt, score_query, score_intent, score_items;
    double score_alpha = 0.3, score_beta = 0.3, score_gamma = 0.3;
    bool score_normalize_rel = false;
    auto* score = app.add_subcommand("score", "rank an items file for a query");
    score->add_option("--checkpoint", score_ckpt, "checkpoint path")->required();
    score->add_option("--query", score_query, "query text")->required();
    score->add_option("--intent", score_intent, "query intent category");
    score->add_option("--items", score_items, "items JSONL path")->required();
    score->add_option("--alpha", score_alpha, "value weight on the click head");
    score->add_option("--beta", score_beta, "value weight on the add-to-cart head");
    score->add_option("--gamma", score_gamma, "value weight on the conversion head");
    score->add_flag("--normalize-rel", score_normalize_rel,
                    "divide the relevance scalar by 2 inside the value function");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            if (gen_print_config) {
                std::cout << relrank::default_gen_config_text();
                return 0;
            }
            if (gen_config.empty() || gen_out.empty()) {
                throw std::runtime_error("generate requires --config and --out");
            }
            const auto outcome = relrank::cmd_generate(gen_config, gen_out);
            std::printf("wrote %s: %zu queries, %zu items, %zu impressions (config %s)\n",
                        gen_out.c_str(), outcome.queries, outcome.items, outcome.impressions,
                        outcome.config_hash.c_str());
        } else if (label->parsed()) {
            const auto report = relrank::cmd_label(label_dataset, label_config, label_out);
            std::printf("wrote %s: %zu labels (%zu human_only, %zu audited_max, "
                        "%zu audited_min, %zu bulk_llm; %zu audits triggered)\n",
                        label_out.c_str(), report.total, report.human_only, report.audited_max,
                        report.audited_min, report.bulk_llm, report.triggered);
            if (report.accuracy_available) {
                std::printf("labeler accuracy vs ground truth: acc3 %.4f, within1 %.4f\n",
                            report.acc3, report.within1);
            }
        } else if (train->parsed()) {
            const auto head = relrank::head_kind_from_name(train_head);
            const auto outcome =
                relrank::cmd_train(train_dataset, train_labels, train_config, head,
                                   engagement_only, train_out, train_init_from);
            const auto& last = outcome.log.back();
            std::printf("wrote %s: %zu epochs, final loss %.6f (config %s)\n",
                        train_out.c_str(), outcome.log.size(), last.total,
                        outcome.checkpoint.config_hash.c_str());
        } else if (eval->parsed()) {
            const auto w = weights_from_flags(eval_alpha, eval_beta, eval_gamma);
            const auto report =
                relrank::cmd_eval(eval_ckpt, eval_dataset, eval_out, w, eval_normalize_rel,
                                  eval_k);
            std::printf("wrote %s: auc ctr %.4f atc %.4f cvr %.4f | ndcg@%zu relevance %.4f "
                        "click %.4f\n",
                        eval_out.c_str(), report.auc_ctr, report.auc_atc, report.auc_cvr,
                        report.k, report.ndcg_relevance.mean, report.ndcg_click.mean);
        } else if (sweep->parsed()) {
            const auto points =
                relrank::cmd_sweep(sweep_ckpt, sweep_dataset, sweep_grid, sweep_out, sweep_k);
            std::printf("wrote %s: %zu grid points\n", sweep_out.c_str(), points.size());
        } else if (score->parsed()) {
            const auto w = weights_from_flags(score_alpha, score_beta, score_gamma);
            std::cout << relrank::cmd_score(score_ckpt, score_query, score_intent, score_items,
                                            w, score_normalize_rel);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
