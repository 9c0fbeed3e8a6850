//! One PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ordrank::eval::roc_auc;
use ordrank::features::shape::{exposed_face_area, shape_features};
use ordrank::features::texture::{cooccurrence, runs, zones};
use ordrank::features::wavelet::inverse_haar3d;
use ordrank::features::{glcm_features, glrlm_features, glszm_features, haar3d, shape_vector, FeatureVector, GrayLevelImage};
use ordrank::forest::{self, ForestConfig, MaxFeatures};
use ordrank::neural::{
    grad_check, lr_at, sgd_momentum_step, sigmoid_ce_loss, softmax_ce_loss, BatchNorm3d, Head, NetConfig, Network, ResBlock,
    Tensor, TrainConfig,
};
use ordrank::ordinal::{build_binary_task, decode, encode, OrdinalLabel, ScoreKind};
use ordrank::rng;
use ordrank::synthgen::{generate_dataset, split};
use ordrank::volume::{enumerate_translations, Mask3D, Region, Volume3D};
use ordrank::Error;
use ordrank_cli::commands::{parse_predictions, probe_regions};
use ordrank_cli::config::{streams, Preset, RunConfig};
use ordrank_cli::container;
use ordrank_cli::pipeline::{self, BenchmarkRow, Learner, Strategy};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit, || format!("{what} took {:.2} s, limit {limit} s", elapsed.as_secs_f64()))
}

fn ordinal_decode_oracle() -> Outcome {
    let start = Instant::now();
    let brute = |s: &[f64], t: &[f64]| {
        let mut n = 1;
        for i in 0..s.len() {
            if s[i] > t[i] {
                n += 1;
            }
        }
        n
    };
    let zeros = ScoreKind::Signed.default_thresholds(3);
    for pattern in 0..8u32 {
        let s: Vec<f64> = (0..3).map(|b| if pattern >> b & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let got = decode(&s, &zeros).map_err(|e| e.to_string())?;
        ensure(got == brute(&s, &zeros), || format!("sign pattern {pattern:03b}: decode {got}"))?;
        ensure(got == 1 + pattern.count_ones() as usize, || format!("sign pattern {pattern:03b}"))?;
    }
    let mut r = rng::seeded(1);
    for i in 0..1000 {
        let tasks = r.random_range(1..8);
        let s: Vec<f64> = (0..tasks).map(|_| r.random_range(-3.0..3.0)).collect();
        let t: Vec<f64> = if i % 2 == 0 {
            ScoreKind::Signed.default_thresholds(tasks)
        } else {
            (0..tasks).map(|_| r.random_range(-1.0..1.0)).collect()
        };
        let got = decode(&s, &t).map_err(|e| e.to_string())?;
        ensure(got == brute(&s, &t), || format!("random vector {i}: decode {got} vs {}", brute(&s, &t)))?;
    }
    within(start.elapsed(), 1.0, "decode oracle")?;
    Ok(format!("8 patterns + 1000 vectors in {:.3} s", start.elapsed().as_secs_f64()))
}

fn encode_decode_round_trip() -> Outcome {
    let mut n = 0;
    for k in 2..=6 {
        for y in 1..=k {
            let code = encode(OrdinalLabel::new(y, k).map_err(|e| e.to_string())?);
            let back = decode(&code.to_signed(), &ScoreKind::Signed.default_thresholds(k - 1)).map_err(|e| e.to_string())?;
            ensure(back == y, || format!("K={k} y={y} decoded {back}"))?;
            n += 1;
        }
    }
    Ok(format!("{n} labels"))
}

fn binary_partition() -> Outcome {
    let mut r = rng::seeded(3);
    let mut tasks = 0;
    let mut degenerate = 0;
    for d in 0..500 {
        let classes = r.random_range(2..=6);
        let n = r.random_range(1..60);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(1..=classes)).collect();
        for k in 1..classes {
            match build_binary_task(&labels, classes, k) {
                Ok(task) => {
                    let mut side = vec![0u8; n];
                    for &i in &task.positives {
                        side[i] += 1;
                        ensure(labels[i] > k, || format!("dataset {d} k={k}: positive {i} has rank {}", labels[i]))?;
                    }
                    for &i in &task.negatives {
                        side[i] += 2;
                        ensure(labels[i] <= k, || format!("dataset {d} k={k}: negative {i} has rank {}", labels[i]))?;
                    }
                    ensure(side.iter().all(|&s| s == 1 || s == 2), || format!("dataset {d} k={k}: not a partition"))?;
                    tasks += 1;
                }
                Err(Error::DegenerateTask { .. }) => {
                    let pos = labels.iter().filter(|&&y| y > k).count();
                    ensure(pos == 0 || pos == n, || format!("dataset {d} k={k}: spurious degenerate task"))?;
                    degenerate += 1;
                }
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    Ok(format!("{tasks} tasks partitioned, {degenerate} one-sided tasks rejected"))
}

fn gradient_audit() -> Outcome {
    let cfg = RunConfig::preset(Preset::Toy);
    let regions = probe_regions(&cfg).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for strategy in Strategy::ALL {
        let start = Instant::now();
        let head = strategy.head(cfg.classes());
        let net = Network::new(NetConfig::toy(head), cfg.stream_seed(streams::NET_INIT)).map_err(|e| e.to_string())?;
        let r = grad_check(&net, &regions, 1e-5, 32, cfg.stream_seed(streams::GRADCHECK)).map_err(|e| e.to_string())?;
        ensure(r.max_rel_error < 1e-4, || format!("{strategy}: max rel error {:e} at {}[{}]", r.max_rel_error, r.worst.0, r.worst.1))?;
        within(start.elapsed(), 60.0, "gradient audit")?;
        parts.push(format!(
            "{strategy} {:.2e} ({} coords, {} skipped, {:.1} s)",
            r.max_rel_error,
            r.checked,
            r.skipped,
            start.elapsed().as_secs_f64()
        ));
    }
    Ok(parts.join("; "))
}

fn residual_identity() -> Outcome {
    let mut checked = 0;
    for (channels, seed) in [(1, 0), (2, 1), (4, 2)] {
        let mut block = ResBlock::new(channels, channels, 3, &mut rng::seeded(seed)).map_err(|e| e.to_string())?;
        block.conv1.weight.value.iter_mut().for_each(|w| *w = 0.0);
        block.conv2.weight.value.iter_mut().for_each(|w| *w = 0.0);
        let mut r = rng::seeded(seed + 10);
        let shape = vec![2, channels, 3, 4, 5];
        let len = shape.iter().product();
        let x = Tensor::new(shape, (0..len).map(|_| f64::from(r.random_range(0..64u8)) / 16.0).collect()).unwrap();
        let (y, _) = block.forward_train(&x).map_err(|e| e.to_string())?;
        let same = y.values().iter().zip(x.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("{channels}-channel block changed its input"))?;
        ensure(block.forward_eval(&x).map_err(|e| e.to_string())? == x, || "eval mode changed input".into())?;
        checked += len;
    }
    Ok(format!("{checked} values bitwise"))
}

fn batchnorm_standardizes() -> Outcome {
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for (seed, n) in [(0u64, 8usize), (1, 9), (2, 16), (3, 32)] {
        let c = 3;
        let spatial = 2 * 3 * 2;
        let mut r = rng::seeded(seed);
        let values = (0..n * c * spatial).map(|_| r.random_range(-5.0..5.0) * 3.0 + 11.0).collect();
        let x = Tensor::new(vec![n, c, 2, 3, 2], values).unwrap();
        let mut bn = BatchNorm3d::new(c);
        let (y, _) = bn.forward_train(&x).map_err(|e| e.to_string())?;
        for ch in 0..c {
            let vals: Vec<f64> =
                (0..n).flat_map(|s| y.values()[(s * c + ch) * spatial..(s * c + ch + 1) * spatial].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / vals.len() as f64;
            worst_mean = worst_mean.max(m.abs());
            worst_var = worst_var.max((v - 1.0).abs());
        }
    }
    ensure(worst_mean < 1e-5 && worst_var < 1e-4, || format!("|mean| {worst_mean:e}, |var-1| {worst_var:e}"))?;
    Ok(format!("|mean| <= {worst_mean:.1e}, |var-1| <= {worst_var:.1e}"))
}

fn loss_and_optimizer_constants() -> Outcome {
    let (s, _) = sigmoid_ce_loss(&Tensor::new(vec![1, 1], vec![0.0]).unwrap(), &[1.0]).map_err(|e| e.to_string())?;
    ensure((s - 2f64.ln()).abs() <= 1e-9, || format!("sigmoid CE {s}"))?;
    let (m, _) = softmax_ce_loss(&Tensor::new(vec![1, 4], vec![0.3; 4]).unwrap(), &[2]).map_err(|e| e.to_string())?;
    ensure((m - 4f64.ln()).abs() <= 1e-9, || format!("softmax CE {m}"))?;
    let mut w = [1.0];
    let mut v = [0.0];
    sgd_momentum_step(&mut w, &[2.0], &mut v, 0.1, 0.9).map_err(|e| e.to_string())?;
    ensure(w[0] == 0.8, || format!("SGD step gave {:?}", w[0]))?;
    let lr = lr_at(40_000, &TrainConfig::paper(0));
    ensure((lr - 5e-6).abs() <= 1e-12, || format!("lr_at(40000) = {lr:e}"))?;
    Ok(format!("ln2 {s:.12}, ln4 {m:.12}, w {:?}, lr {lr:e}", w[0]))
}

fn slice(levels: &[&[u16]], ng: usize) -> GrayLevelImage {
    let nx = levels.len();
    let ny = levels[0].len();
    let mut flat = vec![0; nx * ny];
    for x in 0..nx {
        for y in 0..ny {
            flat[x + nx * y] = levels[x][y];
        }
    }
    GrayLevelImage::from_levels([nx, ny, 1], flat, ng).unwrap()
}

fn close(fv: &FeatureVector, name: &str, want: f64) -> Result<(), String> {
    let got = fv.get(name).ok_or_else(|| format!("missing feature {name}"))?;
    ensure((got - want).abs() < 1e-9, || format!("{name} = {got}, expected {want}"))
}

fn brute_faces(mask: &Mask3D) -> usize {
    let [nx, ny, nz] = mask.dims();
    let mut faces = 0;
    for z in -1..=nz as i64 {
        for y in -1..=ny as i64 {
            for x in -1..=nx as i64 {
                let here = mask.get_signed(x, y, z);
                for (dx, dy, dz) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
                    if here != mask.get_signed(x + dx, y + dy, z + dz) {
                        faces += 1;
                    }
                }
            }
        }
    }
    faces
}

fn feature_oracles() -> Outcome {
    let start = Instant::now();
    let sphericity_cube = (36.0 * PI).cbrt() / 6.0;
    ensure((sphericity_cube - 0.80600).abs() < 1e-4, || "closed form".into())?;

    let voxel = Mask3D::from_fn([3, 3, 3], |x, y, z| (x, y, z) == (1, 1, 1));
    let f = shape_features(&voxel, [1.0; 3]).map_err(|e| e.to_string())?;
    ensure(f.volume == 1.0 && f.surface_area == 6.0 && f.max_diameter_3d == 0.0, || format!("single voxel {f:?}"))?;
    ensure((f.sphericity - 0.80600).abs() < 1e-4, || format!("voxel sphericity {}", f.sphericity))?;

    let cube = Mask3D::from_fn([4, 4, 4], |x, y, z| [x, y, z].iter().all(|c| (1..3).contains(c)));
    let f = shape_features(&cube, [1.0; 3]).map_err(|e| e.to_string())?;
    ensure(f.volume == 8.0 && f.surface_area == 24.0, || format!("cube {f:?}"))?;
    ensure((f.max_diameter_3d - 3f64.sqrt()).abs() < 1e-12, || format!("cube diameter {}", f.max_diameter_3d))?;
    ensure((f.sphericity - 0.80600).abs() < 1e-4, || format!("cube sphericity {}", f.sphericity))?;

    let r = 10.0;
    let n = 23;
    let c = (n / 2) as f64;
    let ball = Mask3D::from_fn([n, n, n], |x, y, z| {
        (x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2) <= r * r
    });
    let f = shape_features(&ball, [1.0; 3]).map_err(|e| e.to_string())?;
    let analytic = 4.0 / 3.0 * PI * r.powi(3);
    let vol_err = (f.volume - analytic).abs() / analytic;
    ensure(vol_err < 0.02, || format!("ball volume off by {vol_err:.4}"))?;
    let faces = brute_faces(&ball) as f64;
    ensure(f.surface_area == faces && exposed_face_area(&ball, [1.0; 3]) == faces, || {
        format!("ball area {} vs {faces} faces", f.surface_area)
    })?;

    let g = slice(&[&[1, 2], &[1, 2]], 2);
    ensure(cooccurrence(&g, [0, 1, 0]) == vec![0.0, 2.0, 2.0, 0.0], || "GLCM matrix".into())?;
    let fv = glcm_features(&g, &[[0, 1, 0]]);
    for (name, want) in
        [("contrast", 1.0), ("joint_energy", 0.5), ("joint_entropy", 1.0), ("difference_average", 1.0), ("correlation", -1.0)]
    {
        close(&fv, name, want)?;
    }
    let g = slice(&[&[1, 1, 2, 2, 2]], 2);
    ensure(runs(&g, [0, 1, 0]) == vec![(1, 2), (2, 3)], || "GLRLM runs".into())?;
    let fv = glrlm_features(&g, &[[0, 1, 0]]);
    close(&fv, "short_run_emphasis", (0.25 + 1.0 / 9.0) / 2.0)?;
    close(&fv, "run_percentage", 0.4)?;
    close(&glrlm_features(&slice(&[&[3; 7]], 4), &[[0, 1, 0]]), "long_run_emphasis", 49.0)?;
    let g = slice(&[&[1, 1], &[2, 3]], 3);
    let mut z = zones(&g);
    z.sort();
    ensure(z == vec![(1, 2), (2, 1), (3, 1)], || format!("GLSZM zones {z:?}"))?;
    close(&glszm_features(&g), "small_area_emphasis", 0.75)?;

    let mut rg = rng::seeded(8);
    let dims = [6, 4, 8];
    let len = dims.iter().product();
    let dyadic = Volume3D::new(dims, (0..len).map(|_| f64::from(rg.random_range(-512..512i32)) / 8.0).collect()).unwrap();
    let back = inverse_haar3d(&haar3d(&dyadic).bands);
    ensure(back.values() == dyadic.values(), || "dyadic Haar round trip not exact".into())?;
    let noisy = Volume3D::new([8, 6, 4], (0..192).map(|_| rg.random_range(-1e3..1e3)).collect()).unwrap();
    let back = inverse_haar3d(&haar3d(&noisy).bands);
    let scale = noisy.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = back.values().iter().zip(noisy.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let bound = 8.0 * f64::EPSILON * scale;
    ensure(worst <= bound, || format!("Haar round trip error {worst:e} above {bound:e}"))?;

    within(start.elapsed(), 30.0, "feature oracles")?;
    Ok(format!("ball volume err {:.2}%, Haar err {worst:.1e}, {:.2} s", vol_err * 100.0, start.elapsed().as_secs_f64()))
}

fn auc_oracle() -> Outcome {
    let mut r = rng::seeded(9);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let n = r.random_range(2..80);
        let ties = i % 2 == 0;
        let scores: Vec<f64> =
            (0..n).map(|_| if ties { f64::from(r.random_range(0..5u8)) } else { r.random::<f64>() }).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let auc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?.auc;
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..n {
            for b in 0..n {
                if labels[a] && !labels[b] {
                    den += 1.0;
                    num += match scores[a].partial_cmp(&scores[b]).unwrap() {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        worst = worst.max((auc - num / den).abs());
    }
    ensure(worst <= 1e-12, || format!("max |AUC - pair count| {worst:e}"))?;
    Ok(format!("200 instances, max diff {worst:.1e}"))
}

fn mask_counts(r: &Region) -> [usize; 2] {
    [r.left.mask.count(), r.right.mask.count()]
}

fn translation_augmentation() -> Outcome {
    let cfg = RunConfig::preset(Preset::Toy);
    let regions = probe_regions(&cfg).map_err(|e| e.to_string())?;
    let mut intact = 0;
    let mut clipped = 0;
    for region in &regions {
        let reference: Vec<u64> = shape_vector(region).map_err(|e| e.to_string())?.values.iter().map(|v| v.to_bits()).collect();
        for magnitude in [1, 2] {
            let shifted = enumerate_translations(region, magnitude);
            ensure(shifted.len() == 26, || format!("{} translations", shifted.len()))?;
            for t in &shifted {
                if mask_counts(t) != mask_counts(region) {
                    clipped += 1;
                    continue;
                }
                let bits: Vec<u64> = shape_vector(t).map_err(|e| e.to_string())?.values.iter().map(|v| v.to_bits()).collect();
                ensure(bits == reference, || format!("shape vector of {} differs", t.id))?;
                intact += 1;
            }
        }
    }
    ensure(intact > 0, || "no non-clipping translation to compare".into())?;
    Ok(format!("{intact} non-clipping translations bit-identical, {clipped} clipped"))
}

/// Frozen after the five-seed calibration run (observed mean 0.769).
const RADIOMICS_ORDINAL_ADJUSTED_ACCURACY: f64 = 0.6;
const BENCHMARK_SEEDS: u64 = 5;

struct Bench {
    rows: Vec<Vec<BenchmarkRow>>,
    elapsed: Duration,
}

fn bench() -> &'static Result<Bench, String> {
    static BENCH: OnceLock<Result<Bench, String>> = OnceLock::new();
    BENCH.get_or_init(|| {
        let start = Instant::now();
        let base = RunConfig::preset(Preset::Toy);
        let data = generate_dataset(&base.synth_config()).map_err(|e| e.to_string())?;
        let (train, test) = split(&data, base.train_fraction, base.stream_seed(streams::SPLIT)).map_err(|e| e.to_string())?;
        for (set, want) in [(&train, 100), (&test, 50)] {
            let labels = set.labels();
            for k in 1..=4 {
                let n = labels.iter().filter(|&&y| y == k).count();
                ensure(n == want, || format!("class {k}: {n} samples, expected {want} per class"))?;
            }
        }
        let mut rows = Vec::new();
        for offset in 0..BENCHMARK_SEEDS {
            let mut cfg = base.clone();
            cfg.seed = base.seed + offset;
            rows.push(pipeline::benchmark(&cfg, &Learner::ALL).map_err(|e| e.to_string())?);
        }
        Ok(Bench { rows, elapsed: start.elapsed() })
    })
}

fn mean_of(b: &Bench, learner: Learner, strategy: Strategy, metric: impl Fn(&BenchmarkRow) -> f64) -> f64 {
    let vals: Vec<f64> = b
        .rows
        .iter()
        .flatten()
        .filter(|r| r.learner == learner && r.strategy == strategy)
        .map(metric)
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn forest_sanity() -> Outcome {
    let x: Vec<Vec<f64>> = (-10..10).map(|i| vec![i as f64 + 0.5]).collect();
    let y: Vec<usize> = x.iter().map(|r| if r[0] < 0.0 { 1 } else { 2 }).collect();
    let cfg = ForestConfig { n_trees: 10, min_leaf: 1, max_features: MaxFeatures::Sqrt, seed: 1 };
    let f = forest::fit(&x, &y, &forest::class_weights(&y, 2), 2, &cfg).map_err(|e| e.to_string())?;
    let correct = x.iter().zip(&y).filter(|(r, &l)| f.predict(r).unwrap() == l).count();
    ensure(correct == x.len(), || format!("separable training accuracy {correct}/{}", x.len()))?;

    let b = bench().as_ref().map_err(Clone::clone)?;
    let aa = mean_of(b, Learner::RfRadiomics, Strategy::Ordinal, |r| r.report.adjusted_accuracy.unwrap_or(0.0));
    ensure(aa >= RADIOMICS_ORDINAL_ADJUSTED_ACCURACY, || format!("mean adjusted accuracy {aa:.4}"))?;
    Ok(format!("separable 20/20; rf-radiomics ordinal adjusted accuracy {aa:.4} >= {RADIOMICS_ORDINAL_ADJUSTED_ACCURACY}"))
}

fn ordinal_versus_multiclass() -> Outcome {
    let b = bench().as_ref().map_err(Clone::clone)?;
    let mut parts = Vec::new();
    for learner in Learner::ALL {
        let ord = mean_of(b, learner, Strategy::Ordinal, |r| r.report.mean_absolute_rank_error);
        let multi = mean_of(b, learner, Strategy::Multiclass, |r| r.report.mean_absolute_rank_error);
        ensure(ord <= multi + 0.05, || format!("{learner}: ordinal MAE {ord:.4} vs multiclass {multi:.4}"))?;
        parts.push(format!("{learner} MAE {ord:.3}/{multi:.3}"));
    }
    let ord = mean_of(b, Learner::Net, Strategy::Ordinal, |r| r.report.adjacency_fraction);
    let multi = mean_of(b, Learner::Net, Strategy::Multiclass, |r| r.report.adjacency_fraction);
    ensure(ord >= multi - 0.05, || format!("net adjacency ordinal {ord:.4} vs multiclass {multi:.4}"))?;
    parts.push(format!("net adjacency {ord:.3}/{multi:.3}"));
    within(b.elapsed, 600.0, "benchmark")?;
    parts.push(format!("{:.0} s", b.elapsed.as_secs_f64()));
    Ok(parts.join(", "))
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ordrank"))
        .current_dir(dir)
        .args(["--config", "run.cfg", "--reference"])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
}

const SMALL_RUN: &str = "synth.per_class = 6\nforest.n_trees = 20\ntrain.max_iter = 20\n";

fn cli_run(dir: &Path, learner: &str) -> Result<Vec<u8>, String> {
    std::fs::write(dir.join("run.cfg"), SMALL_RUN).map_err(|e| e.to_string())?;
    cli(dir, &["--out", "data", "synth"])?;
    cli(dir, &["--out", "m.ordm", "train", "--manifest", "data/train/manifest.tsv", "--learner", learner, "--strategy", "ordinal"])?;
    cli(dir, &["--out", "p.tsv", "predict", "--model", "m.ordm", "--manifest", "data/test/manifest.tsv"])?;
    cli(dir, &["--out", "eval", "eval", "--predictions", "p.tsv"])?;
    std::fs::read(dir.join("eval/report.txt")).map_err(|e| e.to_string())
}

fn determinism_and_persistence() -> Outcome {
    for learner in ["rf-radiomics", "net"] {
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ra = cli_run(a.path(), learner)?;
        let rb = cli_run(b.path(), learner)?;
        ensure(ra == rb, || format!("{learner}: report.txt differs between identical runs"))?;
        // the saved predictions must equal a fresh in-process prediction from the loaded model
        let model = container::load(&a.path().join("m.ordm")).map_err(|e| e.to_string())?;
        let regions = ordrank::volume::io::load_regions(&a.path().join("data/test/manifest.tsv")).map_err(|e| e.to_string())?;
        let text = std::fs::read_to_string(a.path().join("p.tsv")).map_err(|e| e.to_string())?;
        let (_, saved) = parse_predictions(&text).map_err(|e| e.to_string())?;
        ensure(model.predict(&regions).map_err(|e| e.to_string())? == saved, || format!("{learner}: reloaded predictions differ"))?;
    }

    let mut cfg = RunConfig::preset(Preset::Toy);
    cfg.synth.per_class = 6;
    cfg.forest.n_trees = 20;
    cfg.train.max_iter = 20;
    let data = generate_dataset(&cfg.synth_config()).map_err(|e| e.to_string())?;
    let (train, test) = split(&data, cfg.train_fraction, cfg.stream_seed(streams::SPLIT)).map_err(|e| e.to_string())?;
    for learner in Learner::ALL {
        for strategy in Strategy::ALL {
            let model = pipeline::fit(learner, strategy, &train.regions, 4, &cfg).map_err(|e| e.to_string())?;
            let back = container::from_text(&container::to_text(&model)).map_err(|e| e.to_string())?;
            let p = model.predict(&test.regions).map_err(|e| e.to_string())?;
            let q = back.predict(&test.regions).map_err(|e| e.to_string())?;
            let bitwise = p.iter().zip(&q).all(|(a, b)| {
                a.predicted == b.predicted && a.scores.iter().zip(&b.scores).all(|(x, y)| x.to_bits() == y.to_bits())
            });
            ensure(p.len() == q.len() && bitwise, || format!("{learner} {strategy}: predictions changed after reload"))?;
        }
    }
    Ok("report.txt identical across runs; 6 models reload bitwise".into())
}

fn paper_preset_shapes() -> Outcome {
    let cfg = RunConfig::preset(Preset::AdniPaper);
    let regions: Vec<Region> = {
        let mut synth = cfg.synth_config();
        synth.per_class = 1;
        generate_dataset(&synth).map_err(|e| e.to_string())?.regions.into_iter().take(2).collect()
    };
    ensure(regions[0].dims() == [29, 21, 55], || format!("region dims {:?}", regions[0].dims()))?;
    let mut parts = Vec::new();
    for (head, outputs) in [(Head::Ordinal { classes: 4 }, 3), (Head::Multiclass { classes: 4 }, 4)] {
        let net_cfg = NetConfig::paper(head);
        ensure(net_cfg.fc1_width == 256, || format!("fc1 width {}", net_cfg.fc1_width))?;
        let net = Network::new(net_cfg, 1).map_err(|e| e.to_string())?;
        let refs: Vec<&Region> = regions.iter().collect();
        let batch = net.batch(&refs).map_err(|e| e.to_string())?;
        let logits = net.logits(&batch).map_err(|e| e.to_string())?;
        ensure(logits.shape() == [2, outputs], || format!("{} logits shape {:?}", head.name(), logits.shape()))?;
        let feats = net.features(&batch).map_err(|e| e.to_string())?;
        ensure(feats.shape() == [2, 512], || format!("feature shape {:?}", feats.shape()))?;
        let fv = ordrank::neural::extract_features(&net, &regions[0]).map_err(|e| e.to_string())?;
        ensure(fv.len() == 512, || format!("export width {}", fv.len()))?;
        parts.push(format!("{} -> {outputs}", head.name()));
    }
    Ok(format!("{}; fc1 256 per stream, export 512", parts.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("ordinal decode oracle", ordinal_decode_oracle),
        ("encode/decode round trip", encode_decode_round_trip),
        ("binary task partition", binary_partition),
        ("gradient audit", gradient_audit),
        ("residual identity", residual_identity),
        ("batch norm standardization", batchnorm_standardizes),
        ("loss and optimizer constants", loss_and_optimizer_constants),
        ("feature oracles", feature_oracles),
        ("AUC oracle", auc_oracle),
        ("translation augmentation", translation_augmentation),
        ("forest sanity", forest_sanity),
        ("ordinal vs multiclass", ordinal_versus_multiclass),
        ("determinism and persistence", determinism_and_persistence),
        ("adni-paper network shapes", paper_preset_shapes),
    ];
    let only: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
