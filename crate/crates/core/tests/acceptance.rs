//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uncttp::data::{to_jsonl, DatasetSpec};
use uncttp::evaluation::{aggregate, distribution_report, grid_csv, Pipeline, Strategy, Summary};
use uncttp::model::{category_of, group_members, Group, OutcomeBits, UncertaintyCategory};
use uncttp::prompting::PromptTemplate;
use uncttp::provider::{CachedProvider, MockFixture, MockProfile, MockProvider, ResponseCache, REFUSAL_TEXT};
use uncttp::selection::{
    assemble, cosine, entropy, farthest_point_seeds, kmeans, perplexity, rank_similarity, score_entropy,
    score_perplexity, tokenize, Bm25Index, Bm25Params, Embedder, TfIdfEmbedder,
};
use uncttp::tripartite::{Prober, VerificationMethod};
use uncttp::{Error, Instance, LabelSet};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// Category algebra

fn oracle_group(bits: [u8; 3]) -> &'static str {
    match bits {
        [0, 0, 0] => "Cer_W",
        [1, 1, 1] => "Cer_R",
        _ => "Unc",
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut seen = 0;
    for a in 0..2u8 {
        for b in 0..2u8 {
            for c in 0..2u8 {
                let bits = OutcomeBits::new(a == 1, b == 1, c == 1);
                let cat = category_of(bits);
                let code = format!("{a}{b}{c}");
                ensure!(cat.code() == code, "code of {code} is {}", cat.code());
                ensure!(cat.bits() == bits, "bits of {code} do not round-trip");
                ensure!(cat.group().as_str() == oracle_group([a, b, c]), "group of {code} is {}", cat.group());
                ensure!(
                    group_members(cat.group()).contains(&cat),
                    "{code} missing from its group's members"
                );
                ensure!(code.parse::<UncertaintyCategory>().map_err(err)? == cat, "{code} does not parse back");
                seen += 1;
            }
        }
    }
    ensure!(UncertaintyCategory::all().count() == 8, "expected eight categories");
    let sizes: Vec<usize> = Group::ALL.iter().map(|g| group_members(*g).len()).collect();
    ensure!(sizes == [1, 1, 6], "group sizes {sizes:?}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("{seen} triples, {elapsed:?}"))
}

// Golden scripted run

fn golden_plan(i: usize) -> (u8, bool) {
    // (category bits as a number, whether wrong answers are refusals)
    (((i * 5 + i / 8) % 8) as u8, i.is_multiple_of(7))
}

fn criterion_2() -> Outcome {
    let labels = LabelSet::sarcasm();
    let names = labels.labels().to_vec();
    let instances: Vec<Instance> = (0..60)
        .map(|i| Instance::new(format!("g{i:02}"), common::text(i), &names[(i % 3 == 0) as usize]))
        .collect();

    let mut mock = MockProvider::new(labels.clone(), instances.clone());
    let mut expected = String::new();
    let mut tally = [[0usize; 2]; 8];
    for (i, inst) in instances.iter().enumerate() {
        let (code, refuse) = golden_plan(i);
        let bits = [(code >> 2) & 1, (code >> 1) & 1, code & 1];
        let gold = inst.gold.as_str();
        let other = names.iter().find(|l| *l != gold).unwrap().as_str();
        let mut raw = Vec::new();
        for (key, bit) in ["no_label", "right_label", "wrong_label"].into_iter().zip(bits) {
            let (reply, parsed) = match (bit, refuse) {
                (1, _) if i % 5 == 0 => (format!("Answer: {}.", gold.to_uppercase()), format!("\"{gold}\"")),
                (1, _) => (gold.to_string(), format!("\"{gold}\"")),
                (_, true) => (REFUSAL_TEXT.to_string(), "null".to_string()),
                (_, false) => (other.to_string(), format!("\"{other}\"")),
            };
            mock = mock.script(&inst.id, key, &reply);
            raw.push(parsed);
        }
        let code_s = format!("{}{}{}", bits[0], bits[1], bits[2]);
        expected += &format!(
            "{{\"instance_id\":\"{}\",\"model_id\":\"golden\",\"bits\":[{},{},{}],\"code\":\"{code_s}\",\"group\":\"{}\",\"raw_answers\":[{}]}}\n",
            inst.id,
            bits[0],
            bits[1],
            bits[2],
            oracle_group(bits),
            raw.join(",")
        );
        tally[code as usize][labels.index_of(gold).unwrap()] += 1;
    }
    let mut expected_csv = format!("model,dataset,category,group,{},{},count\n", names[0], names[1]);
    for (code, row) in tally.iter().enumerate() {
        let total = row[0] + row[1];
        if total > 0 {
            let bits = [(code >> 2) as u8 & 1, (code >> 1) as u8 & 1, code as u8 & 1];
            expected_csv += &format!(
                "golden,golden-60,{}{}{},{},{},{},{total}\n",
                bits[0],
                bits[1],
                bits[2],
                oracle_group(bits),
                row[0],
                row[1]
            );
        }
    }

    let dir = tempfile::tempdir().map_err(err)?;
    let template = PromptTemplate::default();
    let run = |provider: &CachedProvider<&MockProvider>| -> Result<(String, String), String> {
        let records = Prober::new(provider, "golden", &labels, &template)
            .seed(11)
            .classify_all(&instances)
            .map_err(err)?;
        let table = distribution_report(&records, &instances, &labels, "golden-60");
        Ok((to_jsonl(&records).map_err(err)?, table.to_csv().map_err(err)?))
    };
    let cold = CachedProvider::new(&mock, ResponseCache::open(dir.path()).map_err(err)?);
    let (jsonl, csv) = run(&cold)?;
    ensure!(mock.calls() == 180, "cold run made {} calls", mock.calls());
    ensure!(jsonl == expected, "record file differs from the hand-built oracle");
    ensure!(csv == expected_csv, "distribution differs:\n{csv}\nexpected:\n{expected_csv}");

    mock.reset_calls();
    let warm = CachedProvider::new(&mock, ResponseCache::open(dir.path()).map_err(err)?);
    let (jsonl2, csv2) = run(&warm)?;
    ensure!(mock.calls() == 0, "warm rerun made {} provider calls", mock.calls());
    ensure!(warm.hits() == 180, "warm rerun had {} cache hits", warm.hits());
    ensure!(jsonl2 == expected && csv2 == expected_csv, "warm rerun output differs");
    Ok(format!("{} bytes byte-exact, warm rerun 0 calls", expected.len()))
}

// Call counts

fn criterion_3() -> Outcome {
    let labels = LabelSet::financial();
    let spec = common::spec(labels.clone(), 4, 0, 0);
    let t = PromptTemplate::default();
    let mut checked = 0;
    for logprobs in [false, true] {
        let profile = MockProfile::new(0.6, 0.7, 0.5).sample_drift(0.3).seed(3).logprobs(logprobs);
        let mock = MockProvider::new(labels.clone(), spec.train.clone()).with_profile(profile);
        let prober = Prober::new(&mock, "m", &labels, &t).seed(5);
        let mut count = |what: &str, expect: usize, f: &dyn Fn() -> uncttp::Result<()>| -> Result<(), String> {
            mock.reset_calls();
            f().map_err(err)?;
            ensure!(mock.calls() == expect, "{what}: {} calls, expected {expect}", mock.calls());
            checked += 1;
            Ok(())
        };
        for inst in &spec.train {
            count("run_unc_ttp", 3, &|| prober.run_unc_ttp(inst).map(drop))?;
            for q in [1u32, 3, 5] {
                let q_us = q as usize;
                count("run_vanilla", q_us, &|| prober.run_vanilla(inst, q, 0.7).map(drop))?;
                count("self-check", q_us + 1, &|| prober.score_selfcheck(inst, q).map(drop))?;
                // With logprobs P(True) reads one greedy verification.
                let ptrue = if logprobs { 2 } else { q_us + 1 };
                count("P(True)", ptrue, &|| prober.score_ptrue(inst, q).map(drop))?;
            }
        }
        mock.reset_calls();
        prober.verify_all(&spec.train, VerificationMethod::SelfCheck, 3).map_err(err)?;
        ensure!(mock.calls() == spec.train.len() * 4, "verify_all made {} calls", mock.calls());
    }
    Ok(format!("{checked} counted operations"))
}

// Assembly invariants

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut built, mut dropped, mut short) = (0, 0, 0);
    for trial in 0..10_000u64 {
        let k = rng.random_range(2..=4usize);
        let labels = LabelSet::new((0..k).map(|i| format!("l{i}"))).map_err(err)?;
        let n = rng.random_range(1..=3usize);
        let train: Vec<Instance> = (0..rng.random_range(0..=30usize))
            .map(|i| Instance::new(format!("t{i}"), format!("text {i}"), format!("l{}", rng.random_range(0..k))))
            .collect();
        let eval: Vec<String> = (0..rng.random_range(0..=5)).map(|j| format!("e{j}")).collect();
        let eval_ids: HashSet<&str> = eval.iter().map(String::as_str).collect();
        let p = [0.0, 0.1, 0.5, 1.0][rng.random_range(0..4)];
        let mut category: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for inst in &train {
            if rng.random::<f64>() < p {
                category.entry(inst.gold.clone()).or_default().push(inst.id.clone());
            }
        }
        let in_cat: HashSet<&str> = category.values().flatten().map(String::as_str).collect();
        let per_label = |l: &str| train.iter().filter(|i| i.gold == l).count();
        let in_cat_label = |l: &str| category.get(l).map_or(0, Vec::len);

        match assemble("c", &category, &train, &labels, n, trial) {
            Ok(None) => {
                ensure!(in_cat.is_empty(), "trial {trial}: non-empty category dropped");
                dropped += 1;
            }
            Ok(Some(set)) => {
                ensure!(!in_cat.is_empty(), "trial {trial}: empty category produced a set");
                set.check(&labels, &eval_ids).map_err(|e| format!("trial {trial}: {e}"))?;
                let gold: BTreeMap<&str, &str> = train.iter().map(|i| (i.id.as_str(), i.gold.as_str())).collect();
                let mut supplemented = 0;
                for l in labels.labels() {
                    let outside = set
                        .items
                        .iter()
                        .filter(|d| d.label == *l && !in_cat.contains(d.instance_id.as_str()))
                        .count();
                    ensure!(
                        outside == n.saturating_sub(in_cat_label(l)),
                        "trial {trial}: label {l} has {outside} fallback items"
                    );
                    supplemented += outside;
                }
                for d in &set.items {
                    ensure!(gold.get(d.instance_id.as_str()) == Some(&d.label.as_str()), "trial {trial}: bad item");
                }
                ensure!(set.provenance.supplemented == supplemented, "trial {trial}: supplemented count");
                built += 1;
            }
            Err(Error::InsufficientData(_)) => {
                ensure!(
                    !in_cat.is_empty() && labels.labels().iter().any(|l| per_label(l) < n),
                    "trial {trial}: spurious shortfall"
                );
                short += 1;
            }
            Err(e) => return Err(format!("trial {trial}: {e}")),
        }
    }
    ensure!(built > 0 && dropped > 0 && short > 0, "trial mix {built}/{dropped}/{short}");
    Ok(format!("{built} sets, {dropped} dropped, {short} short of fallback"))
}

// Retrieval oracles

fn brute_bm25(docs: &[String], query: &str, k1: f64, b: f64) -> Vec<f64> {
    let toks = |s: &str| -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for ch in s.chars().flat_map(char::to_lowercase) {
            if ch.is_alphanumeric() {
                cur.push(ch);
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    };
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| toks(d)).collect();
    let n = docs.len() as f64;
    let avgdl = tokenized.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let q = toks(query);
    tokenized
        .iter()
        .map(|doc| {
            let mut s = 0.0;
            for term in &q {
                let df = tokenized.iter().filter(|d| d.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let tf = doc.iter().filter(|t| *t == term).count() as f64;
                let norm = if avgdl > 0.0 { k1 * (1.0 - b + b * doc.len() as f64 / avgdl) } else { k1 };
                s += idf * tf * (k1 + 1.0) / (tf + norm);
            }
            s
        })
        .collect()
}

fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

fn brute_lloyd(points: &[Vec<f64>], seeds: &[usize]) -> Vec<usize> {
    let d2 = |a: &[f64], b: &[f64]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut cents: Vec<Vec<f64>> = seeds.iter().map(|&i| points[i].clone()).collect();
    let mut assign = vec![0; points.len()];
    for _ in 0..100 {
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            for (c, cent) in cents.iter().enumerate().skip(1) {
                if d2(p, cent) < d2(p, &cents[best]) {
                    best = c;
                }
            }
            assign[i] = best;
        }
        let mut moved: f64 = 0.0;
        for c in 0..cents.len() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            let mean = vec![members.iter().map(|p| p[0]).sum::<f64>() / m, members.iter().map(|p| p[1]).sum::<f64>() / m];
            moved = moved.max(d2(&mean, &cents[c]).sqrt());
            cents[c] = mean;
        }
        if moved < 1e-6 {
            break;
        }
    }
    assign
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vocab = ["Apple", "bank", "river", "loan", "rate", "fish", "Stock", "water", "the", "a"];
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let docs: Vec<String> = (0..rng.random_range(1..=10))
            .map(|_| {
                (0..rng.random_range(0..8))
                    .map(|_| vocab[rng.random_range(0..vocab.len())])
                    .collect::<Vec<_>>()
                    .join(if rng.random_bool(0.5) { " " } else { ", " })
            })
            .collect();
        let query: String = (0..rng.random_range(1..5)).map(|_| vocab[rng.random_range(0..vocab.len())]).collect::<Vec<_>>().join(" ");
        let params = Bm25Params {
            k1: rng.random_range(0.5..2.0),
            b: rng.random_range(0.0..=1.0),
        };
        let train: Vec<Instance> = docs.iter().enumerate().map(|(i, d)| Instance::new(format!("d{i}"), d.clone(), "x")).collect();
        let got = Bm25Index::new(&train, params).scores(&query);
        let want = brute_bm25(&docs, &query, params.k1, params.b);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
            ensure!((g - w).abs() <= 1e-9, "bm25 trial {trial}: {g} vs {w}");
        }
        ensure!(tokenize(&query).len() == query.split(' ').count(), "tokenizer split");

        let embedder = TfIdfEmbedder::fit(docs.iter().map(String::as_str));
        let probe = Instance::new("q", query.clone(), "x");
        let ranked = rank_similarity(&probe, &train, &embedder).map_err(err)?;
        let texts: Vec<&str> = docs.iter().map(String::as_str).collect();
        let vecs = embedder.embed(&texts).map_err(err)?;
        let qv = &embedder.embed(&[query.as_str()]).map_err(err)?[0];
        for (id, score) in &ranked.0 {
            let i: usize = id[1..].parse().map_err(err)?;
            let w = brute_cosine(qv, &vecs[i]);
            worst = worst.max((score - w).abs());
            ensure!((score - w).abs() <= 1e-9, "similarity trial {trial}: {score} vs {w}");
        }
        let a: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        ensure!((cosine(&a, &b) - brute_cosine(&a, &b)).abs() <= 1e-9, "cosine trial {trial}");
    }

    let mut km_trials = 0;
    for trial in 0..100u64 {
        let k = rng.random_range(2..=4usize);
        let mut points = Vec::new();
        for _ in 0..rng.random_range(k..=24) {
            let c = rng.random_range(0..k) as f64 * 5.0;
            points.push(vec![c + rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
        }
        let seeds = farthest_point_seeds(&points, k, trial);
        let mut chosen = vec![seeds[0]];
        while chosen.len() < k {
            let far = (0..points.len())
                .map(|i| (i, chosen.iter().map(|&c| (points[i][0] - points[c][0]).powi(2) + (points[i][1] - points[c][1]).powi(2)).fold(f64::INFINITY, f64::min)))
                .fold((0, -1.0), |best, (i, d)| if d > best.1 { (i, d) } else { best });
            chosen.push(far.0);
        }
        ensure!(chosen == seeds, "k-means trial {trial}: seeding {seeds:?} vs {chosen:?}");
        let km = kmeans(&points, k, trial).map_err(err)?;
        ensure!(km.assignments == brute_lloyd(&points, &seeds), "k-means trial {trial}: assignments differ");
        km_trials += 1;
    }
    Ok(format!("200 retrieval toys (max dev {worst:.1e}), {km_trials} k-means toys"))
}

// Statistics

fn criterion_6() -> Outcome {
    let s = aggregate(&[0.68, 0.70, 0.72]);
    ensure!(s.mean == 70.0 && s.std == 2.0 && s.runs == 3, "got {s:?}");
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let xs = [0.68, 0.70, 0.72];
    for p in perms {
        let a = aggregate(&p.map(|i| xs[i]));
        ensure!(a == s, "permutation {p:?} gave {a:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let mut v: Vec<f64> = (0..rng.random_range(2..8)).map(|_| rng.random::<f64>()).collect();
        let base: Summary = aggregate(&v);
        for i in (1..v.len()).rev() {
            v.swap(i, rng.random_range(0..=i));
        }
        ensure!(aggregate(&v) == base, "order changed the summary of {v:?}");
    }
    Ok(format!("{s}, invariant over 1006 orderings"))
}

// Strictness

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let labels = LabelSet::financial();
    let t = PromptTemplate::default();
    let instances = common::split_instances("s", &labels, 40);
    let (mut holds, sweeps) = (0, 50u64);
    let mut margin = 0.0;
    for s in 0..sweeps {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + s);
        let profile = MockProfile::new(rng.random_range(0.3..=1.0), rng.random_range(0.5..=1.0), rng.random_range(0.3..=1.0))
            .sample_drift(rng.random_range(0.0..=0.05))
            .seed(s);
        let mock = MockProvider::new(labels.clone(), instances.clone()).with_profile(profile);
        let prober = Prober::new(&mock, "sycophant", &labels, &t).seed(s);
        let cer = |certain: usize| certain as f64 / instances.len() as f64;
        let unc_ttp = cer(prober.classify_all(&instances).map_err(err)?.iter().filter(|r| r.group().is_certain()).count());
        let vanilla = cer(prober.vanilla_all(&instances, 3, 0.7).map_err(err)?.iter().filter(|r| r.group.is_certain()).count());
        if unc_ttp <= vanilla {
            holds += 1;
        }
        margin += vanilla - unc_ttp;
    }
    let elapsed = start.elapsed();
    let rate = holds as f64 / sweeps as f64;
    ensure!(rate >= 0.95, "held in {holds}/{sweeps} sweeps");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "held in {holds}/{sweeps} sweeps, mean Cer gap {:.3}, {elapsed:?}",
        margin / sweeps as f64
    ))
}

// Oracle end-to-end

fn criterion_8() -> Outcome {
    let spec = common::spec(LabelSet::financial(), 8, 4, 4);
    let mock = MockProvider::new(spec.labels.clone(), spec.all().cloned()).with_profile(MockProfile::oracle().logprobs(true));
    let t = PromptTemplate::default();
    let pipe = Pipeline::new(&mock, "oracle", &spec, &t);
    let mut reports = Vec::new();
    for strategy in Strategy::all() {
        let r = pipe.evaluate(&strategy).map_err(|e| format!("{strategy}: {e}"))?;
        ensure!(r.accuracies.len() == 3, "{strategy}: {} runs", r.accuracies.len());
        ensure!(r.summary.mean == 100.0 && r.summary.std == 0.0, "{strategy}: {}", r.summary);
        reports.push(r);
    }
    let grid = grid_csv(&reports).map_err(err)?;
    let rows: Vec<&str> = grid.lines().skip(1).collect();
    ensure!(rows.len() == Strategy::all().len(), "grid has {} rows", rows.len());
    ensure!(rows.iter().all(|r| r.ends_with(",100.0 (0.0)")), "grid:\n{grid}");
    Ok(format!("{} strategies at 100.0 (0.0) over 3 seeds", rows.len()))
}

// Order independence

fn report_bytes(spec: &DatasetSpec, cache: &std::path::Path, concurrency: usize, strategy: &Strategy) -> Result<String, String> {
    let profile = MockProfile::new(0.65, 0.8, 0.5).sample_drift(0.2).seed(9).logprobs(true);
    let mock = MockProvider::new(spec.labels.clone(), spec.all().cloned()).with_profile(profile);
    let cached = CachedProvider::new(&mock, ResponseCache::open(cache).map_err(err)?);
    let t = PromptTemplate::default();
    let pipe = Pipeline::new(&cached, "noisy", spec, &t).concurrency(concurrency).seed(4);
    pipe.evaluate(strategy).map_err(err)?.to_json().map_err(err)
}

fn criterion_9() -> Outcome {
    let spec = common::spec(LabelSet::financial(), 10, 5, 6);
    let shared = tempfile::tempdir().map_err(err)?;
    let mut compared = 0;
    for strategy in Strategy::all() {
        let fresh = tempfile::tempdir().map_err(err)?;
        let one = report_bytes(&spec, shared.path(), 1, &strategy)?;
        let eight = report_bytes(&spec, shared.path(), 8, &strategy)?;
        let eight_fresh = report_bytes(&spec, fresh.path(), 8, &strategy)?;
        ensure!(one == eight, "{strategy}: bound 1 and 8 differ on a shared cache");
        ensure!(one == eight_fresh, "{strategy}: bound 8 on a fresh cache differs");
        compared += 1;
    }
    Ok(format!("{compared} strategies byte-equal at bounds 1 and 8"))
}

// Entropy and perplexity

fn criterion_10() -> Outcome {
    let h = entropy(&[0.5, 0.5]);
    ensure!((h - 2f64.ln()).abs() <= 1e-12, "entropy {h}");
    let p = perplexity(&[-1.0, -2.0, -3.0]).ok_or("no perplexity")?;
    ensure!((p - 2f64.exp()).abs() <= 1e-12, "perplexity {p}");

    let spec = common::spec(LabelSet::sarcasm(), 3, 2, 2);
    let t = PromptTemplate::default();
    let inst = &spec.train[0];
    let blind = MockProvider::new(spec.labels.clone(), spec.all().cloned()).with_profile(MockProfile::oracle());
    let scripted = MockProvider::new(spec.labels.clone(), spec.all().cloned()).with_fixture(MockFixture::default());
    for (name, mock) in [("profile", &blind), ("fixture", &scripted)] {
        let capability = |r: uncttp::Result<f64>| matches!(r, Err(Error::Capability(_)));
        ensure!(capability(score_entropy(inst, &spec.labels, mock, "m", &t)), "{name}: entropy without logprobs");
        ensure!(capability(score_perplexity(inst, mock, "m")), "{name}: perplexity without logprobs");
        let pipe = Pipeline::new(mock, "m", &spec, &t);
        for s in [Strategy::Entropy, Strategy::Perplexity] {
            ensure!(matches!(pipe.evaluate(&s), Err(Error::Capability(_))), "{name}: {s} pipeline");
        }
        ensure!(mock.calls() == 0, "{name}: {} calls before the capability error", mock.calls());
    }
    Ok(format!("H = {h:.12}, PPL = {p:.12}, capability errors with 0 calls"))
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 10] = [
        ("category algebra", criterion_1),
        ("golden scripted run", criterion_2),
        ("call-count contracts", criterion_3),
        ("assembly invariants", criterion_4),
        ("retrieval and k-means oracles", criterion_5),
        ("statistics", criterion_6),
        ("strictness over sycophant sweeps", criterion_7),
        ("oracle end-to-end", criterion_8),
        ("order independence", criterion_9),
        ("entropy/perplexity identities", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
