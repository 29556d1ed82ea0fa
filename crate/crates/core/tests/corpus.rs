use graphclip::corpus::{
    emit_graphml, generate_pairs, parse_graphml, read_pairs, render_summary_prompt, Domain, FailureRecord,
    GenerateConfig, GraphMlSchema, MockLlm, GRAPHML_PLACEHOLDER, SEED_PLACEHOLDER,
};
use graphclip::tag::{rwr_sample, EgoSubgraph, SamplerConfig, TextAttributedGraph};
use proptest::prelude::*;

const GOLDEN: &str = include_str!("data/template_two_node.graphml");

fn golden_texts() -> Vec<Vec<String>> {
    vec![
        vec![
            "Graph Transformers for Text-Attributed Graphs".into(),
            "We pretrain a graph transformer on subgraph & summary pairs.".into(),
        ],
        vec![
            "Random Walks with Restart".into(),
            "A sampler for local neighborhoods of large graphs.".into(),
        ],
    ]
}

fn two_node_subgraph() -> EgoSubgraph {
    let g = TextAttributedGraph::new(2, [(0, 1)], vec![String::new(); 2]).unwrap();
    EgoSubgraph::induced(&g, vec![0, 1], 0, None).unwrap()
}

#[test]
fn golden_template_byte_exact() {
    let doc = emit_graphml(&two_node_subgraph(), &GraphMlSchema::academic(), &golden_texts()).unwrap();
    assert_eq!(doc, GOLDEN);
}

#[test]
fn golden_template_parses() {
    let doc = parse_graphml(GOLDEN).unwrap();
    assert_eq!(doc.num_nodes(), 2);
    assert_eq!(doc.edges, vec![(0, 1)]);
    assert_eq!(doc.relations, vec!["cited".to_string()]);
    assert_eq!(doc.node_attrs, golden_texts());
    assert_eq!(doc.schema, GraphMlSchema::academic());
}

#[test]
fn prompt_assets_render_without_placeholders() {
    for d in Domain::ALL {
        for seed in [0, 3, 17] {
            let p = render_summary_prompt(GOLDEN, d, seed);
            let without_doc = p.replace(GOLDEN, "");
            assert!(!without_doc.contains(SEED_PLACEHOLDER));
            assert!(!without_doc.contains(GRAPHML_PLACEHOLDER));
            let expected = d
                .template()
                .replace(SEED_PLACEHOLDER, &seed.to_string())
                .replace(GRAPHML_PLACEHOLDER, GOLDEN);
            assert_eq!(p, expected);
        }
    }
}

fn ring_graph(n: usize) -> TextAttributedGraph {
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let raw = (0..n)
        .map(|i| {
            if i == 3 {
                format!("poisoned title {i}\tbody {i}")
            } else {
                format!("title {i}\tbody {i}")
            }
        })
        .collect();
    TextAttributedGraph::new(n, edges, raw).unwrap()
}

#[test]
fn permanent_failure_is_recorded_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let sink = dir.path().join("pairs.jsonl");
    let manifest = dir.path().join("failures.json");
    let out = generate_pairs(
        &ring_graph(10),
        &SamplerConfig::default(),
        &GraphMlSchema::academic(),
        &MockLlm::new().failing_on("poisoned"),
        &GenerateConfig::default(),
        &sink,
        &manifest,
    )
    .unwrap();
    assert_eq!(out.new_pairs.len(), 9);
    assert_eq!(read_pairs(&sink).unwrap().len(), 9);
    let failures: Vec<FailureRecord> = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].seed, 3);
    assert_eq!(failures[0].attempts, 3);
}

#[test]
fn resume_appends_only_missing_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let sink = dir.path().join("pairs.jsonl");
    let manifest = dir.path().join("failures.json");
    let g = ring_graph(10);
    let run = |max_new| {
        let cfg = GenerateConfig {
            max_new,
            ..Default::default()
        };
        generate_pairs(&g, &SamplerConfig::default(), &GraphMlSchema::academic(), &MockLlm::new(), &cfg, &sink, &manifest)
            .unwrap()
    };
    assert_eq!(run(Some(5)).new_pairs.len(), 5);
    let second = run(None);
    assert_eq!(second.new_pairs.len(), 5);
    assert_eq!(second.already_present, 5);
    let mut seeds: Vec<_> = read_pairs(&sink).unwrap().iter().map(|p| p.seed).collect();
    seeds.sort_unstable();
    assert_eq!(seeds, (0..10).collect::<Vec<_>>());
    assert!(run(None).new_pairs.is_empty());
}

fn arb_graph() -> impl Strategy<Value = (TextAttributedGraph, usize, u64)> {
    (2usize..14).prop_flat_map(|n| {
        (
            proptest::collection::vec((0..n, 0..n), 0..3 * n),
            proptest::collection::vec("[ -~]{0,24}", n),
            proptest::collection::vec("[ -~\u{e9}\u{4e2d}]{0,24}", n),
            0..n,
            any::<u64>(),
        )
            .prop_map(move |(edges, titles, bodies, seed, rng)| {
                let edges: Vec<_> = edges.into_iter().filter(|(u, v)| u != v).collect();
                let raw = titles
                    .iter()
                    .zip(&bodies)
                    .map(|(t, b)| format!("{}\t{}", t.replace('\t', " "), b.replace('\t', " ")))
                    .collect();
                (TextAttributedGraph::new(n, edges, raw).unwrap(), seed, rng)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn emit_parse_round_trip((g, seed, rng) in arb_graph()) {
        let sampler = SamplerConfig { rng_seed: rng, ..Default::default() };
        let sub = rwr_sample(&g, seed, &sampler).unwrap();
        let schema = GraphMlSchema::academic();
        let texts = graphclip::corpus::node_texts(&g, &sub, &schema, None);
        let doc = parse_graphml(&emit_graphml(&sub, &schema, &texts).unwrap()).unwrap();
        prop_assert_eq!(&doc.node_attrs, &texts);
        prop_assert_eq!(&doc.skeleton().edges, &sub.edges);
        prop_assert_eq!(doc.num_nodes(), sub.num_nodes());
    }
}
