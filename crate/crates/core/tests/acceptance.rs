//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use frameprobe::annotation::AnnotatedSentence;
use frameprobe::digest::sha256_hex;
use frameprobe::eval::{
    compare_reports, evaluate, random_baseline, AdapterError, AdapterReply, AdapterRequest, ConstantAdapter,
    EvalConfig, EvalReport, McqaItem, ModelAdapter, SURFACE,
};
use frameprobe::graph::{build_graph, check_invariants, extract_triples, graph_stats, EdgeKind, FrameGraph};
use frameprobe::jsonl::{write_jsonl, ArtifactHeader};
use frameprobe::lexicon::FrameLexicon;
use frameprobe::parser::{
    analytic_gradient_check, build_examples, head_accuracy, parse_sentence, random_example, train_heads, EncoderSpec,
    HashEncoder, HeadKind, HeadsCheckpoint, TrainConfig,
};
use frameprobe::probes::{generate_for_graphs, generate_probes, Probe, ProbeConfig, ProbeType};
use frameprobe::registry::{build_adapter, AdapterSettings};
use frameprobe::synthetic::{self, DocumentShape, LexiconShape};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_corpus(seed: u64, docs: usize) -> (FrameLexicon, Vec<FrameGraph>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = synthetic::random_lexicon(
        &mut rng,
        LexiconShape {
            frames: 30,
            max_fes: 5,
            relation_prob: 0.08,
        },
    );
    let shape = DocumentShape {
        sentences: 4,
        max_tokens: 10,
        max_targets: 3,
        vocabulary: 25,
    };
    let graphs = (0..docs)
        .map(|d| {
            let sents = synthetic::random_document(&mut rng, &lex, &format!("doc{d:04}"), Some("train"), shape);
            build_graph(&sents, &lex).expect("generated annotations are valid")
        })
        .collect();
    (lex, graphs)
}

fn generated_items(seed: u64, min: usize) -> Vec<McqaItem> {
    let (lex, graphs) = random_corpus(seed, 400);
    let cfg = ProbeConfig {
        seed,
        ..Default::default()
    };
    let batch = generate_for_graphs(&graphs, &lex, &ProbeType::ALL, &cfg).expect("generation succeeds");
    assert!(
        batch.probes.len() >= min,
        "only {} probes generated",
        batch.probes.len()
    );
    batch.probes.iter().map(Probe::to_item).collect()
}

fn c1_random_baseline() -> Outcome {
    let t = Instant::now();
    let items = generated_items(11, 10_000);
    ensure(items.iter().all(|i| i.choices.len() == 3), "not every probe has k=3")?;
    let r = random_baseline(&items, 7, 5).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    ensure(r.runs.len() == 5, "expected 5 runs")?;
    ensure(
        (r.mean - 1.0 / 3.0).abs() <= 0.01,
        format!("mean {:.4} outside 33.33% ± 1.0%", r.mean),
    )?;
    ensure(el < Duration::from_secs(10), format!("took {el:?}"))?;
    Ok(format!(
        "{} probes, mean {:.2}%, {:.2?}",
        items.len(),
        100.0 * r.mean,
        el
    ))
}

fn c2_ifes_round_trip() -> Outcome {
    let lex = synthetic::travel_dialogue_lexicon();
    let g = build_graph(&synthetic::travel_dialogue_annotations(), &lex).map_err(|e| e.to_string())?;
    let triples = extract_triples(&g);
    ensure(
        triples
            .iter()
            .any(|t| t.subject == "you" && t.relation == "Travel" && t.object == "Traveler"),
        "fixture lacks <you, Travel, Traveler>",
    )?;
    let k = 3;
    let batch = generate_probes(
        &g,
        &lex,
        &[ProbeType::IFES],
        &ProbeConfig {
            k,
            seed: 7,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let p = batch
        .probes
        .iter()
        .find(|p| p.prompt == "In Travel scenario, you is a [mask].")
        .ok_or("no probe with the expected prompt")?;
    let mut distinct = p.choices.clone();
    distinct.sort();
    distinct.dedup();
    ensure(
        p.choices.len() == k && distinct.len() == k,
        format!("choices {:?}", p.choices),
    )?;
    ensure(
        p.choices.iter().filter(|c| *c == "Traveler").count() == 1,
        "Traveler not among choices once",
    )?;
    ensure(
        p.choices[p.answer_index] == "Traveler",
        "answer_index does not point at Traveler",
    )?;
    Ok(format!("choices {:?}, answer {}", p.choices, p.answer_index))
}

fn c3_gradients() -> Outcome {
    let t = Instant::now();
    let mut worst = BTreeMap::new();
    for (i, kind) in [HeadKind::Frame, HeadKind::Bio, HeadKind::Fe].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let mut w = 0.0f64;
        for _ in 0..100 {
            let dim = rng.gen_range(2..12);
            let ex = random_example(kind, &mut rng, dim);
            w = w.max(analytic_gradient_check(&ex, 1e-5));
        }
        worst.insert(format!("{kind:?}"), w);
    }
    let el = t.elapsed();
    for (k, w) in &worst {
        ensure(*w < 1e-4, format!("{k} head max relative error {w:e}"))?;
    }
    ensure(el < Duration::from_secs(30), format!("took {el:?}"))?;
    let detail: Vec<String> = worst.iter().map(|(k, w)| format!("{k} {w:.1e}")).collect();
    Ok(format!("max rel err {}, {:.2?}", detail.join(", "), el))
}

fn trained_checkpoint(seed: u64) -> HeadsCheckpoint {
    let (lex, gold) = synthetic::separable_corpus();
    let enc = HashEncoder::new(32).unwrap();
    let cfg = TrainConfig {
        lr: 0.5,
        batch_size: 4,
        epochs: 200,
        seed,
        fe_hidden: 64,
    };
    let out = train_heads(&gold, &lex, &enc, &cfg).unwrap();
    HeadsCheckpoint::new(
        cfg,
        EncoderSpec {
            name: "hash".into(),
            dim: 32,
        },
        out.heads,
        out.loss_trace,
    )
}

fn c4_trainability() -> Outcome {
    let t = Instant::now();
    let (lex, gold) = synthetic::separable_corpus();
    ensure(gold.len() <= 50, "corpus too large")?;
    let enc = HashEncoder::new(32).map_err(|e| e.to_string())?;
    let ck = trained_checkpoint(3);
    let examples = build_examples(&gold, &lex, &enc, &ck.heads).map_err(|e| e.to_string())?;
    let acc = head_accuracy(&ck.heads, &examples);
    ensure(
        acc.frame == 1.0 && acc.bio == 1.0 && acc.fe == 1.0,
        format!("training accuracy {acc:?}"),
    )?;
    for s in &gold {
        let parsed = parse_sentence(&s.tokens, &lex, &enc, &ck.heads).map_err(|e| e.to_string())?;
        let ann = parsed.to_annotation(&lex, &s.doc_id, s.sentence_index, &s.text, &s.tokens);
        ensure(
            ann.targets == s.targets,
            format!("parse of '{}' differs from gold", s.text),
        )?;
    }
    let el = t.elapsed();
    ensure(el < Duration::from_secs(60), format!("took {el:?}"))?;
    Ok(format!(
        "{} sentences, all sub-tasks 100%, exact parses, {:.2?}",
        gold.len(),
        el
    ))
}

fn canonical(g: &FrameGraph) -> String {
    serde_json::to_string(g).unwrap()
}

fn c5_graph_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut permuted = 0;
    for i in 0..1000 {
        let frames = rng.gen_range(1..10);
        let lex = synthetic::random_lexicon(
            &mut rng,
            LexiconShape {
                frames,
                max_fes: 4,
                relation_prob: 0.2,
            },
        );
        let sentences = rng.gen_range(1..5);
        let shape = DocumentShape {
            sentences,
            max_tokens: 8,
            max_targets: 3,
            vocabulary: 6,
        };
        let sents = synthetic::random_document(&mut rng, &lex, "fuzz", None, shape);
        let g = build_graph(&sents, &lex).map_err(|e| format!("fixture {i}: {e}"))?;
        let problems = check_invariants(&g);
        ensure(problems.is_empty(), format!("fixture {i}: {}", problems.join("; ")))?;

        // Independent edge-typing oracle.
        let frames: std::collections::HashSet<&str> = g.frame_nodes.iter().map(|n| n.instance_id.as_str()).collect();
        for e in &g.edges {
            let ok = match e.kind {
                EdgeKind::FE => frames.contains(e.source.as_str()) && !frames.contains(e.target.as_str()),
                EdgeKind::FF => frames.contains(e.source.as_str()) && frames.contains(e.target.as_str()),
                EdgeKind::EE => !frames.contains(e.source.as_str()) && !frames.contains(e.target.as_str()),
            };
            ensure(ok, format!("fixture {i}: mistyped edge {e:?}"))?;
        }
        let fillers: usize = sents
            .iter()
            .flat_map(|s| &s.targets)
            .map(|t| {
                let mut f: Vec<_> = t.fes.iter().map(|f| (f.start, f.end, &f.fe_id)).collect();
                f.sort();
                f.dedup();
                f.len()
            })
            .sum();
        let st = graph_stats(&g);
        ensure(
            st.fe_edges == fillers,
            format!("fixture {i}: {} FE edges for {fillers} fillers", st.fe_edges),
        )?;
        let triples = extract_triples(&g);
        ensure(
            triples.len() == st.fe_edges + st.ff_edges + st.ee_edges,
            format!("fixture {i}: triple count mismatch"),
        )?;

        if i < 100 {
            let mut shuffled: Vec<AnnotatedSentence> = sents.clone();
            shuffled.shuffle(&mut rng);
            for s in &mut shuffled {
                s.targets.shuffle(&mut rng);
                for t in &mut s.targets {
                    t.fes.shuffle(&mut rng);
                }
            }
            let h = build_graph(&shuffled, &lex).map_err(|e| e.to_string())?;
            ensure(
                canonical(&g) == canonical(&h),
                format!("fixture {i}: graph depends on input order"),
            )?;
            permuted += 1;
        }
    }
    Ok(format!("1000 fixtures valid, {permuted} permutation checks"))
}

fn probe_bytes(seed: u64) -> Vec<u8> {
    let (lex, graphs) = random_corpus(21, 60);
    let cfg = ProbeConfig {
        seed,
        ..Default::default()
    };
    let batch = generate_for_graphs(&graphs, &lex, &ProbeType::ALL, &cfg).unwrap();
    let mut buf = Vec::new();
    let header = ArtifactHeader::new("probes", Some(seed), cfg.digest(&ProbeType::ALL));
    write_jsonl(&mut buf, &header, &batch.probes).unwrap();
    buf
}

fn baseline_bytes(items: &[McqaItem], seed: u64) -> Vec<u8> {
    serde_json::to_vec(&random_baseline(items, seed, 5).unwrap()).unwrap()
}

fn c6_determinism() -> Outcome {
    let d = |b: &[u8]| sha256_hex(b);
    let (p1, p2, p3) = (probe_bytes(7), probe_bytes(7), probe_bytes(8));
    ensure(p1 == p2, "probe generation differs between identical runs")?;
    ensure(d(&p1) != d(&p3), "probe digests equal for different seeds")?;

    let (t1, t2, t3) = (
        trained_checkpoint(5).to_json(),
        trained_checkpoint(5).to_json(),
        trained_checkpoint(6).to_json(),
    );
    ensure(t1 == t2, "training differs between identical runs")?;
    ensure(
        d(t1.as_bytes()) != d(t3.as_bytes()),
        "checkpoint digests equal for different seeds",
    )?;

    let items = generated_items(13, 1);
    let (b1, b2, b3) = (
        baseline_bytes(&items, 7),
        baseline_bytes(&items, 7),
        baseline_bytes(&items, 8),
    );
    ensure(b1 == b2, "random baseline differs between identical runs")?;
    ensure(d(&b1) != d(&b3), "baseline digests equal for different seeds")?;
    Ok("probes, checkpoint and baseline byte-identical per seed, digests differ across seeds".into())
}

struct Oracle(BTreeMap<String, usize>);

impl ModelAdapter for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn answer(&self, r: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError> {
        let i = self.0[r.item_id];
        Ok(AdapterReply::from_text(r.choices[i].clone(), r.choices, 0))
    }
}

/// Serves canned HTTP responses in order, one connection per request.
fn scripted_server(script: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut req_body = vec![0u8; len];
            let _ = reader.read_exact(&mut req_body);
            counter.fetch_add(1, Ordering::SeqCst);
            let reason = if status == 200 { "OK" } else { "Too Many Requests" };
            let resp = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            let _ = stream.write_all(resp.as_bytes());
            let _ = stream.flush();
        }
    });
    (url, hits)
}

fn c7_harness() -> Outcome {
    let items = generated_items(17, 10_000);
    let golds: BTreeMap<String, usize> = items.iter().map(|i| (i.id.clone(), i.answer_index)).collect();
    let cfg = EvalConfig::default();
    let oracle = evaluate(&Oracle(golds), &items, &cfg).map_err(|e| e.to_string())?;
    ensure(
        oracle.report.accuracy() == 1.0,
        format!("oracle accuracy {}", oracle.report.accuracy()),
    )?;

    let constant = evaluate(&ConstantAdapter { reply: "A".into() }, &items, &cfg).map_err(|e| e.to_string())?;
    let acc = constant.report.accuracy();
    ensure((acc - 1.0 / 3.0).abs() <= 0.02, format!("constant-A accuracy {acc:.4}"))?;

    let ok_body = r#"{"choices":[{"message":{"role":"assistant","content":"A"}}]}"#.to_string();
    let (url, hits) = scripted_server(vec![(429, "{}".into()), (429, "{}".into()), (200, ok_body)]);
    let adapter = build_adapter(
        "http",
        &AdapterSettings {
            model: "stub".into(),
            base_url: Some(url),
            backoff_base_ms: Some(10),
            max_concurrent: Some(1),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let one = vec![items[0].clone()];
    let run = evaluate(
        adapter.as_ref(),
        &one,
        &EvalConfig {
            timeout_ms: 5_000,
            ..cfg
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(run.report.overall.abstain == 0, "fixture server item abstained")?;
    ensure(
        run.report.metadata.backoffs >= 2,
        format!("{} backoffs recorded", run.report.metadata.backoffs),
    )?;
    ensure(hits.load(Ordering::SeqCst) == 3, "expected three requests")?;
    Ok(format!(
        "{} items: oracle 1.0, constant-A {:.4}; 429,429,200 -> 0 abstentions, {} backoffs {:?} ms",
        items.len(),
        acc,
        run.report.metadata.backoffs,
        run.replies[0].backoff_ms
    ))
}

fn fixture_report(correct: usize, key: &str) -> EvalReport {
    EvalReport::from_outcomes(
        "model-x",
        0,
        "fixture".into(),
        (0..100).map(|i| (key, i < correct, false)),
    )
}

fn c8_compare() -> Outcome {
    let skp = fixture_report(62, SURFACE);
    let mut outcomes = Vec::new();
    for (t, n, c) in [("IFES", 50, 20), ("FFR", 50, 17)] {
        outcomes.extend((0..n).map(move |i| (t, i < c, false)));
    }
    let hkp = EvalReport::from_outcomes("model-x", 0, "fixture".into(), outcomes);
    ensure(
        (skp.accuracy() - 0.62).abs() < 1e-12 && (hkp.accuracy() - 0.37).abs() < 1e-12,
        "fixture accuracies",
    )?;
    let d = compare_reports(&skp, &hkp, false).map_err(|e| e.to_string())?;
    ensure((d.delta + 0.25).abs() < 1e-9, format!("delta {}", d.delta))?;
    ensure(d.radar.len() == 6, format!("{} radar axes", d.radar.len()))?;
    let json = serde_json::to_value(&d.radar).unwrap();
    let nulls = json.as_array().unwrap().iter().filter(|a| a["value"].is_null()).count();
    ensure(nulls == 4, format!("{nulls} null axes, expected 4"))?;
    Ok(format!("delta {:+.2}, 6 radar axes ({nulls} null)", d.delta))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("random baseline fidelity", c1_random_baseline),
        ("IFES prompt round-trip", c2_ifes_round_trip),
        ("gradient correctness", c3_gradients),
        ("desk-scale trainability", c4_trainability),
        ("graph invariants", c5_graph_fuzz),
        ("determinism", c6_determinism),
        ("harness correctness", c7_harness),
        ("SKP/HKP comparison", c8_compare),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        match res {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why}", n + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
