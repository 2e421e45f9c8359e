use awe::encoders::EmbeddingBatch;
use awe::evaluation::{average_precision, equal_error_rate};
use awe::frontend::FeatureSequence;
use awe::losses::{
    cae_recon, clap_loss, clap_loss_multi, cosine_matrix, dwd_centroids, dwd_loss, dwd_loss_with,
    dwd_similarities, multiview_hinge, ntxent, reconstruction_error, siamese_hinge, similarity_matrix,
    total_loss, DwdBatch, DwdOptions, LossWeights, Reduction, SimilarityMatrix,
};
use rand::Rng;

use super::{rng, unit_vector, Check};

pub const EXAMPLE_TOL: f64 = 1e-9;
pub const ORACLE_TOL: f64 = 1e-12;
pub const RANDOM_FIXTURES: u64 = 100;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

fn lse(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in xs {
        s += x.exp();
    }
    s.ln()
}

/// `C[i][j] = exp(τ) · t_i · a_j` with the logit scale capped at 100.
pub fn naive_similarity(text: &[Vec<f64>], audio: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    let scale = tau.exp().min(100.0);
    text.iter().map(|t| audio.iter().map(|a| scale * dot(t, a)).collect()).collect()
}

/// Symmetric cross-entropy against the diagonal, averaged over both directions.
pub fn naive_clap(c: &[Vec<f64>]) -> f64 {
    let n = c.len();
    let mut rows = 0.0;
    let mut cols = 0.0;
    for i in 0..n {
        rows += -(c[i][i].exp() / c[i].iter().map(|v| v.exp()).sum::<f64>()).ln();
        let col: Vec<f64> = (0..n).map(|r| c[r][i]).collect();
        cols += -(c[i][i].exp() / col.iter().map(|v| v.exp()).sum::<f64>()).ln();
    }
    0.5 * (rows / n as f64 + cols / n as f64)
}

/// `classes[j][i]` is instance `i` of class `j`.
pub fn naive_clap_multi(text: &[Vec<f64>], classes: &[Vec<Vec<f64>>], tau: f64) -> f64 {
    let m = classes[0].len();
    let mut total = 0.0;
    for i in 0..m {
        let slice: Vec<Vec<f64>> = classes.iter().map(|c| c[i].clone()).collect();
        total += naive_clap(&naive_similarity(text, &slice, tau));
    }
    total / m as f64
}

/// Leave-one-out centroid of instance `i` in class `j`.
pub fn naive_loo(classes: &[Vec<Vec<f64>>], j: usize, i: usize) -> Vec<f64> {
    let d = classes[j][0].len();
    let m = classes[j].len();
    let mut c = vec![0.0; d];
    for (r, e) in classes[j].iter().enumerate() {
        if r != i {
            for k in 0..d {
                c[k] += e[k] / (m - 1) as f64;
            }
        }
    }
    c
}

pub fn naive_full(classes: &[Vec<Vec<f64>>], j: usize) -> Vec<f64> {
    let d = classes[j][0].len();
    let m = classes[j].len();
    let mut c = vec![0.0; d];
    for e in &classes[j] {
        for k in 0..d {
            c[k] += e[k] / m as f64;
        }
    }
    c
}

/// `S[j][i][k]`.
pub fn naive_dwd_similarities(classes: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let n = classes.len();
    (0..n)
        .map(|j| {
            (0..classes[j].len())
                .map(|i| {
                    (0..n)
                        .map(|k| {
                            let c = if k == j { naive_loo(classes, j, i) } else { naive_full(classes, k) };
                            cos(&classes[j][i], &c)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `(L_sm, L_cc)` summed (or averaged) over every instance.
pub fn naive_dwd(classes: &[Vec<Vec<f64>>], scale: f64, mean: bool) -> (f64, f64) {
    let s = naive_dwd_similarities(classes);
    let (mut sm, mut cc, mut count) = (0.0, 0.0, 0.0);
    for (j, class) in s.iter().enumerate() {
        for row in class {
            let row: Vec<f64> = row.iter().map(|v| scale * v).collect();
            sm += -row[j] + lse(&row);
            let mut hardest = f64::NEG_INFINITY;
            for (k, &v) in row.iter().enumerate() {
                if k != j && v > hardest {
                    hardest = v;
                }
            }
            cc += 1.0 - row[j] + hardest;
            count += 1.0;
        }
    }
    if mean {
        (sm / count, cc / count)
    } else {
        (sm, cc)
    }
}

pub fn naive_hinge(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    let dp = 1.0 - cos(a, p);
    let dn = 1.0 - cos(a, n);
    if margin + dp - dn > 0.0 {
        margin + dp - dn
    } else {
        0.0
    }
}

pub fn naive_ntxent(a: &[f64], p: &[f64], negs: &[Vec<f64>], tau: f64) -> f64 {
    let num = (cos(a, p) / tau).exp();
    let mut den = num;
    for n in negs {
        den += (cos(a, n) / tau).exp();
    }
    -(num / den).ln()
}

pub fn naive_recon(target: &[Vec<f64>], predicted: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for t in 0..target.len() {
        for f in 0..target[t].len() {
            let d = target[t][f] - predicted[t][f];
            s += d * d;
        }
    }
    s
}

fn batch(rows: &[Vec<f64>]) -> EmbeddingBatch {
    EmbeddingBatch::from_rows(rows.to_vec()).unwrap()
}

fn nested(classes: &[Vec<Vec<f64>>]) -> DwdBatch {
    DwdBatch::from_nested(classes).unwrap()
}

fn random_classes(r: &mut impl Rng, n: usize, m: usize, d: usize) -> Vec<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut class = Vec::with_capacity(m);
        for _ in 0..m {
            let v: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            class.push(v.into_iter().map(|x| x / norm).collect());
        }
        out.push(class);
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn matrix_diff(c: &SimilarityMatrix, want: &[Vec<f64>]) -> f64 {
    let flat: Vec<f64> = want.concat();
    max_abs_diff(c.scores(), &flat)
}

/// Every worked loss example plus the library-versus-loop comparisons on
/// random fixtures.
pub fn loss_checks() -> Vec<Check> {
    let mut out = loss_examples();
    out.extend(loss_random_fixtures(RANDOM_FIXTURES));
    out
}

pub fn loss_examples() -> Vec<Check> {
    let t = EXAMPLE_TOL;
    let mut out = Vec::new();

    // Similarity matrix.
    let eye = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    let c = similarity_matrix(&batch(&eye), &batch(&eye), 0.0).unwrap();
    let id: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| (i == j) as u8 as f64).collect()).collect();
    out.push(Check::new("similarity: orthonormal rows at tau 0 give identity", matrix_diff(&c, &id), 0.0, t));
    let par = vec![vec![0.6, 0.8]];
    let c = similarity_matrix(&batch(&par), &batch(&par), 2f64.ln()).unwrap();
    out.push(Check::new("similarity: tau ln 2 on a parallel pair", c.get(0, 0), 2.0, t));

    // Symmetric audio-text loss.
    let one = SimilarityMatrix::from_rows(&[vec![3.7]], true).unwrap();
    out.push(Check::new("clap: N=1", clap_loss(&one).unwrap(), 0.0, t));
    let flat = SimilarityMatrix::from_rows(&[vec![0.4, 0.4], vec![0.4, 0.4]], true).unwrap();
    out.push(Check::new("clap: N=2 constant matrix", clap_loss(&flat).unwrap(), 2f64.ln(), t));
    let diag = SimilarityMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], true).unwrap();
    let want = (1.0 + (-1f64).exp()).ln();
    out.push(Check::new("clap: N=2 identity", clap_loss(&diag).unwrap(), want, t));
    out.push(Check::new("clap: N=2 identity literal", clap_loss(&diag).unwrap(), 0.313262, 5e-7));

    let mut r = rng(11);
    let text: Vec<Vec<f64>> = (0..3).map(|_| unit_vector(&mut r, 4)).collect();
    let classes1: Vec<Vec<Vec<f64>>> = (0..3).map(|_| vec![unit_vector(&mut r, 4)]).collect();
    let slice: Vec<Vec<f64>> = classes1.iter().map(|c| c[0].clone()).collect();
    let single = clap_loss(&similarity_matrix(&batch(&text), &batch(&slice), 0.5).unwrap()).unwrap();
    out.push(Check::new(
        "clap multi: M=1 equals one slice",
        clap_loss_multi(&batch(&text), &nested(&classes1), 0.5).unwrap(),
        single,
        t,
    ));
    let repeated: Vec<Vec<Vec<f64>>> = classes1.iter().map(|c| vec![c[0].clone(); 3]).collect();
    out.push(Check::new(
        "clap multi: identical slices equal one slice",
        clap_loss_multi(&batch(&text), &nested(&repeated), 0.5).unwrap(),
        single,
        t,
    ));
    let text2: Vec<Vec<f64>> = (0..2).map(|_| unit_vector(&mut r, 4)).collect();
    let classes2 = random_classes(&mut r, 2, 2, 4);
    out.push(Check::new(
        "clap multi: N=2 M=2 loop oracle",
        clap_loss_multi(&batch(&text2), &nested(&classes2), 1.3).unwrap(),
        naive_clap_multi(&text2, &classes2, 1.3),
        ORACLE_TOL,
    ));

    // Centroids.
    let pair = random_classes(&mut r, 2, 2, 3);
    let cent = dwd_centroids(&nested(&pair)).unwrap();
    for j in 0..2 {
        for i in 0..2 {
            let got = &cent.loo[(j * 2 + i) * 3..(j * 2 + i + 1) * 3];
            out.push(Check::new(
                format!("centroids: M=2 leave-one-out of ({j},{i}) is the other instance"),
                max_abs_diff(got, &pair[j][1 - i]),
                0.0,
                t,
            ));
        }
    }
    let v = vec![0.3, -0.4, 0.5];
    let same = vec![vec![v.clone(); 3], vec![v.clone(); 3]];
    let cent = dwd_centroids(&nested(&same)).unwrap();
    out.push(Check::new(
        "centroids: identical instances give v",
        max_abs_diff(&cent.loo, &v.repeat(6)).max(max_abs_diff(&cent.full, &v.repeat(2))),
        0.0,
        t,
    ));
    let three = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], vec![vec![1.0, 0.0]; 3]];
    let cent = dwd_centroids(&nested(&three)).unwrap();
    out.push(Check::new(
        "centroids: M=3 hand example",
        max_abs_diff(&cent.loo[0..2], &[0.5, 1.0]),
        0.0,
        t,
    ));

    // Instance-to-centroid cosines.
    let ortho = vec![vec![vec![1.0, 0.0]; 2], vec![vec![0.0, 1.0]; 2]];
    let b = nested(&ortho);
    let s = dwd_similarities(&b, &dwd_centroids(&b).unwrap()).unwrap();
    out.push(Check::new(
        "similarities: identical instances and orthogonal classes",
        max_abs_diff(&s, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]),
        0.0,
        t,
    ));
    let rand22 = random_classes(&mut r, 2, 2, 4);
    let b = nested(&rand22);
    let s = dwd_similarities(&b, &dwd_centroids(&b).unwrap()).unwrap();
    let want: Vec<f64> = naive_dwd_similarities(&rand22).into_iter().flatten().flatten().collect();
    out.push(Check::new("similarities: N=2 M=2 loop oracle", max_abs_diff(&s, &want), 0.0, ORACLE_TOL));

    // Audio-audio loss.
    let l = dwd_loss(&nested(&ortho)).unwrap();
    let want_sm = 4.0 * (-1.0 + (1f64.exp() + 1.0).ln());
    out.push(Check::new("dwd: orthogonal classes L_sm", l.sm, want_sm, t));
    // The printed value is four times the six-decimal 0.313262, so it carries
    // up to 4 · 5e-7 of rounding.
    out.push(Check::new("dwd: orthogonal classes L_sm literal", l.sm, 1.253048, 2e-6));
    out.push(Check::new("dwd: orthogonal classes L_cc", l.cc, 0.0, t));
    // One instance of class 0 sits exactly on its centroid; the nearest
    // other centroid has cosine s = 0.6.
    let s_val = 0.6;
    let tilted = vec![
        vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        vec![vec![s_val, (1.0f64 - s_val * s_val).sqrt()], vec![s_val, (1.0f64 - s_val * s_val).sqrt()]],
    ];
    let b = nested(&tilted);
    let sims = dwd_similarities(&b, &dwd_centroids(&b).unwrap()).unwrap();
    out.push(Check::new("dwd: on-centroid instance contributes s to L_cc", (1.0 - sims[0]) + sims[1], s_val, t));
    let rand32 = random_classes(&mut r, 3, 2, 5);
    let (sm, cc) = naive_dwd(&rand32, 1.0, false);
    let l = dwd_loss(&nested(&rand32)).unwrap();
    out.push(Check::new("dwd: N=3 M=2 loop oracle", l.total(), sm + cc, ORACLE_TOL));

    // Joint objective.
    let text3: Vec<Vec<f64>> = (0..3).map(|_| unit_vector(&mut r, 5)).collect();
    let tau = (1.0f64 / 0.07).ln();
    let opts = DwdOptions::default();
    let tl = |a1: f64, a2: f64| {
        total_loss(&batch(&text3), &nested(&rand32), tau, &LossWeights { alpha1: a1, alpha2: a2 }, &opts)
            .unwrap()
            .total
    };
    out.push(Check::new("total: alpha=(0,1) is the audio-audio loss", tl(0.0, 1.0), sm + cc, t));
    let clap_ref = naive_clap_multi(&text3, &rand32, tau);
    out.push(Check::new("total: alpha=(1,0) is the averaged audio-text loss", tl(1.0, 0.0), clap_ref, t));
    out.push(Check::new(
        "total: alpha=(0.1,1) component sum",
        tl(0.1, 1.0),
        0.1 * clap_ref + sm + cc,
        ORACLE_TOL,
    ));

    // Comparison objectives.
    let (a, p) = (vec![1.0, 0.0], vec![1.0, 0.0]);
    let n60 = vec![0.5, 3f64.sqrt() / 2.0];
    out.push(Check::new("hinge: a=p and d(a,n)=m", siamese_hinge(&a, &p, &n60, 0.5).unwrap(), 0.0, t));
    out.push(Check::new("hinge: a=p=n gives m", siamese_hinge(&a, &a, &a, 0.5).unwrap(), 0.5, t));
    out.push(Check::new(
        "hinge: hand cosine distances",
        siamese_hinge(&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], 0.5).unwrap(),
        0.0,
        t,
    ));
    out.push(Check::new(
        "multiview hinge: identical match, orthogonal mismatch",
        multiview_hinge(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], 0.5).unwrap(),
        0.0,
        t,
    ));
    out.push(Check::new("multiview hinge: all equal gives m", multiview_hinge(&a, &a, &a, 0.5).unwrap(), 0.5, t));
    let (x, y, z) = (unit_vector(&mut r, 4), unit_vector(&mut r, 4), unit_vector(&mut r, 4));
    out.push(Check::new(
        "multiview hinge: random triple",
        multiview_hinge(&x, &y, &z, 1.5).unwrap(),
        naive_hinge(&x, &y, &z, 1.5),
        ORACLE_TOL,
    ));
    out.push(Check::new(
        "ntxent: parallel positive, orthogonal negative",
        ntxent(&a, &[2.0, 0.0], &[vec![0.0, 1.0]], 1.0).unwrap().loss,
        (1.0 + (-1f64).exp()).ln(),
        t,
    ));
    out.push(Check::new(
        "ntxent: identical candidates give ln(K+1)",
        ntxent(&x, &x, &vec![x.clone(); 4], 0.1).unwrap().loss,
        5f64.ln(),
        t,
    ));
    let negs: Vec<Vec<f64>> = (0..6).map(|_| unit_vector(&mut r, 4)).collect();
    out.push(Check::new(
        "ntxent: random inputs",
        ntxent(&x, &y, &negs, 0.3).unwrap().loss,
        naive_ntxent(&x, &y, &negs, 0.3),
        ORACLE_TOL,
    ));
    let tgt = FeatureSequence::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.0, -0.25]]).unwrap();
    let off = FeatureSequence::from_rows(&[vec![1.5, 0.0, 3.0], vec![2.5, 1.0, 0.75]]).unwrap();
    out.push(Check::new("reconstruction: identical", cae_recon(&tgt, &tgt).unwrap(), 0.0, t));
    out.push(Check::new("reconstruction: off by one in 2x3 cells", cae_recon(&tgt, &off).unwrap(), 6.0, t));
    let tr: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
    let pr: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
    out.push(Check::new(
        "reconstruction: random pair",
        reconstruction_error(&tr.concat(), &pr.concat()).unwrap(),
        naive_recon(&tr, &pr),
        ORACLE_TOL,
    ));
    out
}

/// Library paths against the loop oracles on `count` random fixtures.
pub fn loss_random_fixtures(count: u64) -> Vec<Check> {
    let tol = ORACLE_TOL;
    let mut out = Vec::new();
    for seed in 0..count {
        let mut r = rng(1000 + seed);
        let n = r.gen_range(2..=5);
        let m = r.gen_range(2..=4);
        let d = r.gen_range(2..=8);
        let tau = r.gen_range(-1.0..5.0);
        let classes = random_classes(&mut r, n, m, d);
        let text: Vec<Vec<f64>> = (0..n).map(|_| unit_vector(&mut r, d)).collect();
        let b = nested(&classes);
        let slice: Vec<Vec<f64>> = classes.iter().map(|c| c[0].clone()).collect();

        let c = similarity_matrix(&batch(&text), &batch(&slice), tau).unwrap();
        out.push(Check::new(
            format!("fixture {seed}: similarity matrix"),
            matrix_diff(&c, &naive_similarity(&text, &slice, tau)),
            0.0,
            tol,
        ));
        let raw = cosine_matrix(&batch(&text), &batch(&slice)).unwrap();
        out.push(Check::new(
            format!("fixture {seed}: unscaled matrix within [-1, 1]"),
            raw.scores().iter().map(|v| (v.abs() - 1.0).max(0.0)).fold(0.0, f64::max),
            0.0,
            tol,
        ));
        out.push(Check::new(
            format!("fixture {seed}: clap"),
            clap_loss(&c).unwrap(),
            naive_clap(&naive_similarity(&text, &slice, tau)),
            tol,
        ));
        out.push(Check::new(
            format!("fixture {seed}: clap multi"),
            clap_loss_multi(&batch(&text), &b, tau).unwrap(),
            naive_clap_multi(&text, &classes, tau),
            tol,
        ));
        let s = dwd_similarities(&b, &dwd_centroids(&b).unwrap()).unwrap();
        let want: Vec<f64> = naive_dwd_similarities(&classes).into_iter().flatten().flatten().collect();
        out.push(Check::new(format!("fixture {seed}: dwd similarities"), max_abs_diff(&s, &want), 0.0, tol));
        for (label, reduction, scaled) in [
            ("sum", Reduction::Sum, false),
            ("mean", Reduction::Mean, false),
            ("scaled", Reduction::Sum, true),
        ] {
            let opts = DwdOptions {
                reduction,
                tau_scaled: scaled,
            };
            let l = dwd_loss_with(&b, &opts, tau).unwrap();
            let scale = if scaled { tau.exp().min(100.0) } else { 1.0 };
            let (sm, cc) = naive_dwd(&classes, scale, reduction == Reduction::Mean);
            out.push(Check::new(format!("fixture {seed}: dwd {label} L_sm"), l.sm, sm, tol));
            out.push(Check::new(format!("fixture {seed}: dwd {label} L_cc"), l.cc, cc, tol));
        }
        let (a1, a2) = (r.gen_range(0.0..2.0), r.gen_range(0.0..2.0));
        let got = total_loss(&batch(&text), &b, tau, &LossWeights { alpha1: a1, alpha2: a2 }, &DwdOptions::default())
            .unwrap()
            .total;
        let (sm, cc) = naive_dwd(&classes, 1.0, false);
        out.push(Check::new(
            format!("fixture {seed}: total"),
            got,
            a1 * naive_clap_multi(&text, &classes, tau) + a2 * (sm + cc),
            tol,
        ));
        let margin = r.gen_range(0.0..2.0);
        let (x, y, z) = (&classes[0][0], &classes[0][1], &classes[1][0]);
        out.push(Check::new(
            format!("fixture {seed}: hinge"),
            siamese_hinge(x, y, z, margin).unwrap(),
            naive_hinge(x, y, z, margin),
            tol,
        ));
        let negs: Vec<Vec<f64>> = classes[1..].iter().map(|c| c[0].clone()).collect();
        let nt_tau = r.gen_range(0.05..1.0);
        out.push(Check::new(
            format!("fixture {seed}: ntxent"),
            ntxent(x, y, &negs, nt_tau).unwrap().loss,
            naive_ntxent(x, y, &negs, nt_tau),
            tol,
        ));
        let tr: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| r.gen_range(-3.0..3.0)).collect()).collect();
        let pr: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| r.gen_range(-3.0..3.0)).collect()).collect();
        out.push(Check::new(
            format!("fixture {seed}: reconstruction"),
            reconstruction_error(&tr.concat(), &pr.concat()).unwrap(),
            naive_recon(&tr, &pr),
            tol,
        ));
    }
    out
}

/// AP by enumerating every distinct threshold, counting afresh at each one.
pub fn brute_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let p = labels.iter().filter(|&&l| l).count();
    let (mut prev_tp, mut acc) = (0usize, 0.0);
    for th in thresholds {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= th).count();
        let retrieved = scores.iter().filter(|&&s| s >= th).count();
        if tp > prev_tp {
            acc += (tp - prev_tp) as f64 * tp as f64 / retrieved as f64;
        }
        prev_tp = tp;
    }
    acc / p as f64
}

/// EER by enumerating thresholds in ascending order (every distinct score, then
/// one above the maximum); accept when `score >= threshold`. Returns the first
/// point where FAR no longer exceeds FRR, interpolating linearly from the
/// previous threshold when they cross strictly between the two.
pub fn brute_eer(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let p = labels.iter().filter(|&&l| l).count() as f64;
    let n = labels.len() as f64 - p;
    let rates = |th: f64| {
        let fa = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= th).count() as f64;
        let fr = scores.iter().zip(labels).filter(|(&s, &l)| l && s < th).count() as f64;
        (fa / n, fr / p)
    };
    let mut prev: Option<(f64, f64)> = None;
    for th in thresholds {
        let (far, frr) = rates(th);
        let diff = far - frr;
        if diff <= 0.0 {
            return match prev {
                Some((far0, frr0)) if diff < 0.0 => {
                    let d0 = far0 - frr0;
                    let t = d0 / (d0 - diff);
                    far0 + t * (far - far0)
                }
                _ => far,
            };
        }
        prev = Some((far, frr));
    }
    unreachable!("FAR is zero above every score")
}

/// Deterministic score/label fixtures up to 1000 trials: worked examples,
/// ties, degenerate layouts and random draws on a coarse grid.
pub fn metric_fixtures() -> Vec<(String, Vec<f64>, Vec<bool>)> {
    let mut out: Vec<(String, Vec<f64>, Vec<bool>)> = vec![
        ("worked example".into(), vec![0.9, 0.8, 0.7], vec![true, false, true]),
        ("one positive below one negative".into(), vec![0.1, 0.8], vec![true, false]),
        ("perfect separation".into(), vec![0.9, 0.8, 0.2, 0.1], vec![true, true, false, false]),
        ("perfect inversion".into(), vec![0.1, 0.2, 0.8, 0.9], vec![true, true, false, false]),
        ("two-by-two grid".into(), vec![0.9, 0.4, 0.6, 0.1], vec![true, true, false, false]),
        ("all tied".into(), vec![0.5; 6], vec![true, false, true, false, false, true]),
        ("single positive".into(), vec![0.3, 0.2, 0.9, 0.1], vec![true, false, false, false]),
        ("single negative".into(), vec![0.3, 0.2, 0.9, 0.1], vec![false, true, true, true]),
        ("identical distributions".into(), vec![0.1, 0.2, 0.3, 0.1, 0.2, 0.3], vec![true, true, true, false, false, false]),
        ("tie across the boundary".into(), vec![0.9, 0.5, 0.5, 0.1], vec![true, true, false, false]),
        ("negative scores".into(), vec![-0.2, -0.9, 0.0, -1.0], vec![true, false, true, false]),
    ];
    for seed in 0..200u64 {
        let mut r = rng(5000 + seed);
        let len = if seed < 190 { r.gen_range(2..=200) } else { 1000 };
        // Coarse grids force ties; fine grids exercise the untied path.
        let levels = [3, 10, 1000, 1 << 30][seed as usize % 4] as f64;
        let bias = r.gen_range(0.0..0.5);
        let mut labels: Vec<bool> = (0..len).map(|_| r.gen_bool(0.3)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores = labels
            .iter()
            .map(|&l| {
                let s: f64 = r.gen_range(-1.0..1.0) + if l { bias } else { 0.0 };
                (s * levels).round() / levels
            })
            .collect();
        out.push((format!("random {seed} ({len} trials)"), scores, labels));
    }
    out
}

pub fn metric_checks() -> Vec<Check> {
    let mut out = vec![Check::new(
        "AP worked example",
        average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap(),
        0.833333,
        5e-7,
    )];
    out.push(Check::new(
        "AP worked example, exact fraction",
        average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap(),
        (1.0 + 2.0 / 3.0) / 2.0,
        EXAMPLE_TOL,
    ));
    for (name, scores, labels) in metric_fixtures() {
        out.push(Check::exact(format!("AP {name}"), average_precision(&scores, &labels).unwrap(), brute_ap(&scores, &labels)));
        out.push(Check::exact(format!("EER {name}"), equal_error_rate(&scores, &labels).unwrap(), brute_eer(&scores, &labels)));
    }
    out
}
