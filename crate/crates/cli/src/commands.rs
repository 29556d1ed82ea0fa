//! Subcommand implementations. Each reads inputs recorded in the run
//! directory and writes its artifacts there.

use std::path::{Path, PathBuf};

use serde::Serialize;

use graphclip::adapt::{
    accuracy, evaluate_link_prediction, evaluate_node_classification, prompt_tune, sample_subgraphs, seeded_sampler,
    EvalReport, FewShotSplit, LabelPromptSet, SeedSummary,
};
use graphclip::checkpoint::Checkpoint;
use graphclip::corpus::{
    generate_pairs, read_pairs, write_pairs, GraphSummaryPair, HttpLlmClient, LlmClient, MockLlm,
};
use graphclip::gradcheck::grad_check;
use graphclip::model::GraphEncoder;
use graphclip::pretrain::{pretrain, TrainingExample};
use graphclip::synthetic::{synthetic_graph, synthetic_label_prompts, synthetic_summary};
use graphclip::tag::{load_graph, rwr_sample, TextAttributedGraph};
use graphclip::text::{TextEncoder, TextEncoderSpec};
use graphclip::theory::{verify_proposition, verify_theorem_bound};

use crate::config::{ClientKind, RunConfig};
use crate::error::CliError;
use crate::run::RunDir;

fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing `{key}` (set it in the config or pass --{key} <path>)")))
}

fn text_encoder(cfg: &RunConfig, run: &mut RunDir) -> Result<Box<dyn TextEncoder>, CliError> {
    if let TextEncoderSpec::Table { path } = &cfg.text {
        run.input(path)?;
    }
    Ok(cfg.text.build()?)
}

fn graph_input(run: &mut RunDir, path: &Path, text: Option<&dyn TextEncoder>) -> Result<TextAttributedGraph, CliError> {
    let mut g = load_graph(run.input(path)?)?;
    if let Some(t) = text {
        g.encode_features(t)?;
    }
    Ok(g)
}

fn checkpoint_input(cfg: &RunConfig, run: &mut RunDir, text: &dyn TextEncoder) -> Result<Checkpoint, CliError> {
    let path = require(&cfg.data.checkpoint, "data.checkpoint")?;
    let ckpt = Checkpoint::load(run.input(path)?)?;
    if let Some(expected) = ckpt.header.metadata.get("text_encoder_checksum").and_then(|v| v.as_str()) {
        if expected != text.checksum() {
            return Err(CliError::Validation(format!(
                "checkpoint {} was trained against a different text encoder",
                path.display()
            )));
        }
    }
    if ckpt.encoder.config.d_text != text.dim() {
        return Err(CliError::Validation(format!(
            "checkpoint expects {}-dim text embeddings, text encoder gives {}",
            ckpt.encoder.config.d_text,
            text.dim()
        )));
    }
    Ok(ckpt)
}

fn labels_input(cfg: &RunConfig, run: &mut RunDir, text: &dyn TextEncoder) -> Result<LabelPromptSet, CliError> {
    let path = require(&cfg.data.labels, "data.labels")?;
    Ok(LabelPromptSet::load(run.input(path)?, text)?)
}

fn dataset_name(cfg: &RunConfig) -> String {
    cfg.data
        .dataset
        .clone()
        .or_else(|| {
            cfg.data
                .target
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "target".into())
}

#[derive(Serialize)]
struct SampleRecord {
    seed: usize,
    center_local_id: usize,
    nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
    rwpe: Vec<Vec<f64>>,
}

pub fn sample(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let g = graph_input(run, require(&cfg.data.graph, "data.graph")?, None)?;
    let pe = cfg.sample.pe_dim.unwrap_or(cfg.encoder.pe_dim);
    let seeds: Vec<usize> = cfg.sample.seeds.clone().unwrap_or_else(|| (0..g.num_nodes()).collect());
    let mut out = String::new();
    for &s in &seeds {
        if s >= g.num_nodes() {
            return Err(CliError::Validation(format!("seed {s} outside graph of {} nodes", g.num_nodes())));
        }
        let sub = rwr_sample(&g, s, &cfg.sampler)?.with_rwpe(pe);
        let rec = SampleRecord {
            seed: s,
            center_local_id: sub.center_local_id,
            rwpe: sub.positional.rows().into_iter().map(|r| r.to_vec()).collect(),
            nodes: sub.global_ids,
            edges: sub.edges,
        };
        out.push_str(&serde_json::to_string(&rec).map_err(|e| CliError::Validation(e.to_string()))?);
        out.push('\n');
    }
    run.write("samples.jsonl", out)?;
    println!("sampled {} subgraphs", seeds.len());
    Ok(())
}

pub fn gen_corpus(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let g = graph_input(run, require(&cfg.data.graph, "data.graph")?, None)?;
    let c = &cfg.corpus;
    let schema = c.generate.domain.schema();
    let client: Box<dyn LlmClient> = match c.client {
        ClientKind::Mock => {
            let mut m = MockLlm::new();
            for marker in &c.mock_fail_on {
                m = m.failing_on(marker.clone());
            }
            Box::new(m)
        }
        ClientKind::Http => Box::new(HttpLlmClient::new(c.llm.clone())?),
    };
    let mut gen = c.generate.clone();
    gen.retries = c.llm.retries;
    let outcome = generate_pairs(
        &g,
        &cfg.sampler,
        &schema,
        client.as_ref(),
        &gen,
        &run.path("pairs.jsonl"),
        &run.path("failures.json"),
    )?;
    println!(
        "generated {} pairs, {} failures, {} already present",
        outcome.new_pairs.len(),
        outcome.failures.len(),
        outcome.already_present
    );
    Ok(())
}

pub fn pretrain_cmd(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let text = text_encoder(cfg, run)?;
    let g = graph_input(run, require(&cfg.data.graph, "data.graph")?, Some(text.as_ref()))?;
    let pairs = read_pairs(run.input(require(&cfg.data.pairs, "data.pairs")?)?)?;
    let examples = pairs
        .into_iter()
        .map(|p| {
            if p.seed >= g.num_nodes() {
                return Err(CliError::Validation(format!("pair seed {} outside source graph", p.seed)));
            }
            Ok(TrainingExample {
                subgraph: p.subgraph(&g, &cfg.sampler)?.with_rwpe(cfg.encoder.pe_dim),
                summary: p.summary,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let outcome = pretrain(&examples, text.as_ref(), &cfg.encoder, &cfg.pretrain, Some(&run.dir))?;
    let last = cfg.pretrain.epochs - 1;
    println!(
        "pretrained on {} pairs: epoch loss {:.4} -> {:.4}",
        examples.len(),
        outcome.mean_epoch_loss(0).unwrap_or(f64::NAN),
        outcome.mean_epoch_loss(last).unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Serialize)]
struct TuneSeed {
    seed: u64,
    zero_shot: f64,
    tuned: f64,
    sigma: Vec<f64>,
    losses: Vec<f64>,
}

#[derive(Serialize)]
struct TuneRecord {
    shots: usize,
    encoder_checksum_before: String,
    encoder_checksum_after: String,
    text_checksum_before: String,
    text_checksum_after: String,
    seeds: Vec<TuneSeed>,
}

fn few_shot(
    cfg: &RunConfig,
    encoder: &GraphEncoder,
    text: &dyn TextEncoder,
    graph: &TextAttributedGraph,
    labels: &LabelPromptSet,
    shots: usize,
    seeds: &[u64],
) -> Result<TuneRecord, CliError> {
    let encoder_checksum_before = encoder.params.checksum();
    let text_checksum_before = text.checksum();
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let split = FewShotSplit::new(graph, labels, shots, seed)?;
        let sampler = seeded_sampler(&cfg.sampler, seed);
        let train = split.train_pairs();
        let ids: Vec<usize> = train.iter().map(|p| p.0).collect();
        let y: Vec<usize> = train.iter().map(|p| p.1).collect();
        let train_subs = sample_subgraphs(encoder, graph, &ids, &sampler)?;
        let node_labels = graph.labels.as_ref().expect("labeled nodes exist");
        let truth: Vec<usize> = split.test.iter().map(|&v| node_labels[v].expect("labeled")).collect();
        let test_subs = sample_subgraphs(encoder, graph, &split.test, &sampler)?;
        let zero_shot = accuracy(encoder, &test_subs, &truth, labels, None)?;
        let tuned = prompt_tune(encoder, &train_subs, &y, labels, &cfg.tune.prompt)?;
        let tuned_acc = accuracy(encoder, &test_subs, &truth, labels, Some(&tuned.sigma))?;
        out.push(TuneSeed {
            seed,
            zero_shot,
            tuned: tuned_acc,
            sigma: tuned.sigma,
            losses: tuned.losses,
        });
    }
    Ok(TuneRecord {
        shots,
        encoder_checksum_before,
        encoder_checksum_after: encoder.params.checksum(),
        text_checksum_before,
        text_checksum_after: text.checksum(),
        seeds: out,
    })
}

fn write_tuning(run: &RunDir, record: &TuneRecord, report: &mut EvalReport, dataset: &str) -> Result<(), CliError> {
    let seeds: Vec<u64> = record.seeds.iter().map(|s| s.seed).collect();
    let zs = SeedSummary::new(seeds.clone(), record.seeds.iter().map(|s| s.zero_shot).collect());
    let tuned = SeedSummary::new(seeds, record.seeds.iter().map(|s| s.tuned).collect());
    report.push_summary(dataset, "node-classification", record.shots, "accuracy_zero_shot", &zs);
    report.push_summary(dataset, "node-classification", record.shots, "accuracy_tuned", &tuned);
    let json = serde_json::to_string_pretty(record).map_err(|e| CliError::Validation(e.to_string()))?;
    run.write("prompt_tuning.json", json + "\n")?;
    println!(
        "{}-shot accuracy: zero-shot {:.4} ± {:.4}, tuned {:.4} ± {:.4}",
        record.shots, zs.mean, zs.std, tuned.mean, tuned.std
    );
    Ok(())
}

pub fn eval_nc(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let text = text_encoder(cfg, run)?;
    let ckpt = checkpoint_input(cfg, run, text.as_ref())?;
    let g = graph_input(run, require(&cfg.data.target, "data.target")?, Some(text.as_ref()))?;
    let labels = labels_input(cfg, run, text.as_ref())?;
    let dataset = dataset_name(cfg);
    let mut report = EvalReport::default();
    if cfg.eval.shots == 0 {
        let s = evaluate_node_classification(
            &ckpt.encoder,
            &g,
            &labels,
            &cfg.sampler,
            &cfg.eval.eval_config(),
            None,
        )?;
        report.push_summary(&dataset, "node-classification", 0, "accuracy", &s);
        println!("zero-shot accuracy {:.4} ± {:.4}", s.mean, s.std);
    } else {
        let record = few_shot(cfg, &ckpt.encoder, text.as_ref(), &g, &labels, cfg.eval.shots, &cfg.eval.seeds)?;
        write_tuning(run, &record, &mut report, &dataset)?;
    }
    report.write(run.path("report.csv"))?;
    Ok(())
}

pub fn eval_lp(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let text = text_encoder(cfg, run)?;
    let ckpt = checkpoint_input(cfg, run, text.as_ref())?;
    let g = graph_input(run, require(&cfg.data.target, "data.target")?, Some(text.as_ref()))?;
    let s = evaluate_link_prediction(&ckpt.encoder, &g, &cfg.sampler, &cfg.link, None)?;
    let mut report = EvalReport::default();
    report.push_summary(&dataset_name(cfg), "link-prediction", 0, "auc", &s);
    report.write(run.path("report.csv"))?;
    println!("zero-shot link AUC {:.4} ± {:.4}", s.mean, s.std);
    Ok(())
}

pub fn tune(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let text = text_encoder(cfg, run)?;
    let ckpt = checkpoint_input(cfg, run, text.as_ref())?;
    let g = graph_input(run, require(&cfg.data.target, "data.target")?, Some(text.as_ref()))?;
    let labels = labels_input(cfg, run, text.as_ref())?;
    let record = few_shot(cfg, &ckpt.encoder, text.as_ref(), &g, &labels, cfg.tune.shots, &cfg.tune.seeds)?;
    let mut report = EvalReport::default();
    write_tuning(run, &record, &mut report, &dataset_name(cfg))?;
    report.write(run.path("report.csv"))?;
    Ok(())
}

pub fn theory(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let t = &cfg.theory;
    let prop = verify_proposition(t.zeta, t.n_samples, t.seed)?;
    let bound = verify_theorem_bound(&t.theorem)?;
    let text = format!("{}\n{}", prop.to_text(), bound.to_text());
    run.write("theory_report.txt", &text)?;
    let json = serde_json::json!({ "proposition": prop, "theorem": bound });
    run.write(
        "theory_report.json",
        serde_json::to_string_pretty(&json).map_err(|e| CliError::Validation(e.to_string()))? + "\n",
    )?;
    print!("{text}");
    if !prop.pass || !bound.passed() {
        return Err(CliError::Gate(format!(
            "theory checks failed: proposition {}, {} bound violations",
            if prop.pass { "passed" } else { "failed" },
            bound.violations()
        )));
    }
    Ok(())
}

pub fn grad_check_cmd(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let report = grad_check(&cfg.gradcheck)?;
    let text = report.to_text();
    run.write("gradcheck_report.txt", &text)?;
    print!("{text}");
    if !report.passed() {
        return Err(CliError::Gate(format!(
            "{} of {} gradient checks failed",
            report.failures().len(),
            report.checks.len()
        )));
    }
    Ok(())
}

pub fn make_synthetic(cfg: &RunConfig, run: &mut RunDir) -> Result<(), CliError> {
    let text = text_encoder(cfg, run)?;
    let s = &cfg.synthetic;
    let source = synthetic_graph(&s.source)?;
    let target = synthetic_graph(&s.target)?;
    let source_path = run.write("source.tsv", source.to_edge_list())?;
    let target_path = run.write("target.tsv", target.to_edge_list())?;
    let labels = LabelPromptSet::new(synthetic_label_prompts(cfg.data.dataset.as_deref())?, text.as_ref())?;
    let labels_path = run.write("labels.tsv", labels.to_asset())?;
    let pairs = (0..source.num_nodes().min(s.pairs))
        .map(|v| {
            let sub = rwr_sample(&source, v, &cfg.sampler)?;
            GraphSummaryPair::new(
                "synthetic-source",
                v,
                cfg.sampler.rng_seed,
                cfg.corpus.generate.domain,
                synthetic_summary(&source, &sub),
            )
        })
        .collect::<graphclip::Result<Vec<_>>>()?;
    let pairs_path = run.path("pairs.jsonl");
    write_pairs(&pairs_path, &pairs)?;

    let abs = |p: PathBuf| std::fs::canonicalize(&p).unwrap_or(p);
    let mut toy = cfg.clone();
    toy.out_dir = None;
    toy.data.graph = Some(abs(source_path));
    toy.data.target = Some(abs(target_path));
    toy.data.labels = Some(abs(labels_path));
    toy.data.pairs = Some(abs(pairs_path));
    toy.data.dataset = Some("synthetic".into());
    toy.pretrain.optimizer.lr = 1e-3;
    let toml = toml::to_string(&toy).map_err(|e| CliError::Validation(e.to_string()))?;
    run.write("toy.toml", toml)?;
    println!(
        "wrote synthetic source ({} nodes), target ({} nodes), {} pairs and toy.toml",
        source.num_nodes(),
        target.num_nodes(),
        pairs.len()
    );
    Ok(())
}
