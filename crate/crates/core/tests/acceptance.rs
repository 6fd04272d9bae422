//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;

use cpquant::catalog::{self, cnot_channel, cnot_limit_pattern_residual, pauli_x};
use cpquant::channel::QuantumChannel;
use cpquant::dynamics::{
    attractor_projection, cesaro_fixed_point, detect_limit_cycle, verify_isometry, CycleParams,
};
use cpquant::gns::{kappa_matrix, m_f_array, m_f_operator};
use cpquant::linalg::{
    commutator_frobenius, cr, diag, frobenius_distance, trace_norm_distance, CMat, DensityMatrix,
};
use cpquant::measures::{markov_pushforward, DiscreteMeasure};
use cpquant::quantization::{
    check_universal_quantization, diagram_sides, random_function, random_positive_function,
    shift_positive, solve_diagonal_kraus, StateFunction, TransferSpec,
};
use cpquant::random::{dirichlet_uniform, random_density, random_kraus, random_unitary, seeded};
use cpquant::scenario::strip_timestamp;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

struct CnotRun {
    rho0: DensityMatrix,
    cycle: Vec<DensityMatrix>,
}

fn cnot_runs() -> Vec<CnotRun> {
    let ch = cnot_channel();
    let params = CycleParams {
        max_iter: 2000,
        ..CycleParams::default()
    };
    (0..20u64)
        .filter_map(|seed| {
            let rho0 = random_density(4, &mut seeded(seed));
            let set = detect_limit_cycle(&ch, &rho0, &params).ok()?;
            (set.period == 2).then_some(CnotRun {
                rho0,
                cycle: set.cycle,
            })
        })
        .collect()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let ch = cnot_channel();
    let params = CycleParams {
        max_iter: 2000,
        ..CycleParams::default()
    };
    let mut period_two = 0;
    let mut max_iter = 0;
    let mut pattern: f64 = 0.0;
    let mut commutator: f64 = 0.0;
    for seed in 0..20u64 {
        let rho0 = random_density(4, &mut seeded(seed));
        let Ok(set) = detect_limit_cycle(&ch, &rho0, &params) else {
            continue;
        };
        if set.period != 2 {
            continue;
        }
        period_two += 1;
        max_iter = max_iter.max(set.burn_in);
        pattern = pattern.max(cnot_limit_pattern_residual(&set.cycle[0], &set.cycle[1]));
        commutator = commutator.max(commutator_frobenius(&set.cycle[0], &set.cycle[1]).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        period_two == 20 && pattern <= 1e-7 && commutator <= 1e-8 && secs < 2.0,
        format!(
            "CNOT limit cycles: {period_two}/20 period 2, max iterations {max_iter}, \
             pattern residual {pattern:.2e}, commutator {commutator:.2e}, {secs:.2} s"
        ),
    )
}

fn criterion_2(runs: &[CnotRun]) -> Verdict {
    let ch = cnot_channel();
    let mut rng = seeded(2);
    let mut worst: f64 = 0.0;
    for run in runs {
        let report = verify_isometry(&ch, &run.cycle, 50, 1e-8, &mut rng).unwrap();
        worst = worst.max(report.max_distortion);
    }
    verdict(
        runs.len() == 20 && worst <= 1e-8,
        format!(
            "isometry on {} cycle hulls: max distortion {worst:.2e}",
            runs.len()
        ),
    )
}

fn criterion_3(runs: &[CnotRun]) -> Verdict {
    let ch = cnot_channel();
    let mut rng = seeded(3);
    let (mut to_mid, mut fixed, mut spread) = (0.0_f64, 0.0_f64, 0.0_f64);
    for run in runs {
        let (s1, s2) = (run.cycle[0].matrix(), run.cycle[1].matrix());
        let mid = (s1 + s2) * cr(0.5);
        let f = cesaro_fixed_point(&ch, &run.rho0, 1e-10, 1 << 40).unwrap();
        to_mid = to_mid.max(trace_norm_distance(&f, &mid));
        fixed = fixed.max(trace_norm_distance(&ch.apply_matrix(&f), &f));
        let hull_point = |t: f64| DensityMatrix::new(s1 * cr(t) + s2 * cr(1.0 - t)).unwrap();
        let a = cesaro_fixed_point(&ch, &hull_point(rng.random()), 1e-10, 1 << 40).unwrap();
        let b = cesaro_fixed_point(&ch, &hull_point(rng.random()), 1e-10, 1 << 40).unwrap();
        spread = spread.max(trace_norm_distance(&a, &b));
    }
    verdict(
        runs.len() == 20 && to_mid <= 1e-7 && fixed <= 1e-8 && spread <= 1e-7,
        format!(
            "Cesaro fixed points: distance to cycle midpoint {to_mid:.2e}, \
             fixed-point defect {fixed:.2e}, hull start spread {spread:.2e}"
        ),
    )
}

fn criterion_4() -> Verdict {
    let channels: Vec<(&str, QuantumChannel, usize)> = vec![
        ("identity", QuantumChannel::identity(2), 1),
        (
            "amplitude damping",
            catalog::amplitude_damping(0.4).unwrap(),
            1,
        ),
        ("CNOT", cnot_channel(), 2),
    ];
    let mut rng = seeded(4);
    let (mut agreement, mut idempotency) = (0.0_f64, 0.0_f64);
    for (_, ch, period) in &channels {
        let tau = attractor_projection(ch, 1e-9).unwrap();
        let t = &tau.matrix;
        idempotency = idempotency.max(frobenius_distance(&(t * t), t));
        for _ in 0..5 {
            let rho = random_density(ch.dim(), &mut rng);
            // the subsequence Phi^(p m) converges to the peripheral component
            let far = ch.apply_power(&rho, 200 * period).unwrap();
            agreement = agreement.max(frobenius_distance(&tau.apply_matrix(&rho), &far));
        }
    }
    verdict(
        agreement <= 1e-6 && idempotency <= 1e-8,
        format!(
            "attractor projection on {}: agreement {agreement:.2e}, idempotency {idempotency:.2e}",
            channels.iter().map(|c| c.0).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_5() -> Verdict {
    let mut rng = seeded(5);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=4);
        let k = rng.random_range(1..=n * n);
        let ch = QuantumChannel::new(random_kraus(n, k, &mut rng), true).unwrap();
        let rho = random_density(n, &mut rng);
        let sigma = random_density(n, &mut rng);
        let excess = trace_norm_distance(&ch.apply_matrix(&rho), &ch.apply_matrix(&sigma))
            - trace_norm_distance(&rho, &sigma);
        worst = worst.max(excess);
        if excess > 1e-10 {
            violations += 1;
        }
    }
    verdict(
        violations == 0,
        format!(
            "non-expansiveness on 1000 triples: {violations} violations, max excess {worst:.2e}"
        ),
    )
}

struct QuantInstance {
    spec: TransferSpec,
    mu: DiscreteMeasure,
    f: StateFunction,
}

fn random_diagonal_measure(n: usize, atoms: usize, rng: &mut impl Rng) -> DiscreteMeasure {
    let weights = dirichlet_uniform(atoms, rng);
    DiscreteMeasure::from_pairs(
        weights
            .into_iter()
            .map(|w| {
                (
                    w,
                    DensityMatrix::diagonal(&dirichlet_uniform(n, rng)).unwrap(),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn quant_instances() -> Vec<QuantInstance> {
    let mut rng = seeded(6);
    (0..100)
        .map(|_| {
            let n = rng.random_range(2..=3);
            let k = rng.random_range(1..=n * n);
            let branches = (0..k)
                .map(|_| {
                    let r = rng.random_range(1..=3);
                    QuantumChannel::new(random_kraus(n, r, &mut rng), true).unwrap()
                })
                .collect();
            let spec = TransferSpec::new(dirichlet_uniform(k, &mut rng), branches).unwrap();
            let atoms = rng.random_range(1..=4);
            let mu = random_diagonal_measure(n, atoms, &mut rng);
            let f = random_positive_function(&spec, &mu, &mut rng);
            QuantInstance { spec, mu, f }
        })
        .collect()
}

fn criterion_6(instances: &[QuantInstance], secs: f64) -> Verdict {
    let start = Instant::now();
    let mut solved = 0;
    let mut worst: f64 = 0.0;
    for q in instances {
        if let Ok(sol) = solve_diagonal_kraus(&q.spec, &q.f, &q.mu, None) {
            solved += 1;
            worst = worst.max(sol.residual);
        }
    }
    let secs = secs + start.elapsed().as_secs_f64();
    verdict(
        solved == instances.len() && worst <= 1e-10 && secs < 5.0,
        format!(
            "diagonal Kraus round trip: {solved}/{} solved, max residual {worst:.2e}, {secs:.2} s",
            instances.len()
        ),
    )
}

fn criterion_7() -> Verdict {
    let spec =
        TransferSpec::mixed_unitary(vec![0.5, 0.5], vec![CMat::identity(2, 2), pauli_x()]).unwrap();
    let mu = DiscreteMeasure::dirac(DensityMatrix::diagonal(&[0.75, 0.25]).unwrap());
    let f = StateFunction::constant(1.0).plus(StateFunction::re(1, 1));
    let sol = solve_diagonal_kraus(&spec, &f, &mu, None).unwrap();
    let expected = ["0.707107", "0.707107", "0.597614", "0.597614"];
    let got: Vec<f64> = sol.moduli.iter().flatten().copied().collect();
    let moduli_ok = got
        .iter()
        .zip(expected)
        .all(|(g, e)| format!("{g:.6}") == e);
    let kraus: Vec<CMat> = sol.kraus.iter().map(|k| k.matrix().clone()).collect();
    let (lhs, rhs) = diagram_sides(&spec, &f, &mu, &kraus).unwrap();
    let diag_err = [&lhs, &rhs]
        .iter()
        .flat_map(|m| [(m[(0, 0)].re - 1.125).abs(), (m[(1, 1)].re - 0.375).abs()])
        .fold(0.0, f64::max);
    verdict(
        moduli_ok && diag_err <= 1e-12,
        format!(
            "bit-flip instance: moduli [{}], diagonal entries {:.12}/{:.12} (error {diag_err:.2e})",
            got.iter()
                .map(|m| format!("{m:.6}"))
                .collect::<Vec<_>>()
                .join(", "),
            lhs[(0, 0)].re,
            lhs[(1, 1)].re
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut rng = seeded(8);
    let (mut agree, mut fixed_cases, mut pass_cases) = (0, 0, 0);
    for case in 0..50 {
        let n = rng.random_range(2..=3);
        let k = rng.random_range(1..=3);
        let atoms = rng.random_range(1..=3);
        let weights = dirichlet_uniform(k, &mut rng);
        let (unitaries, states): (Vec<CMat>, Vec<DensityMatrix>) = if case % 2 == 0 {
            // commuting unitaries and atoms diagonal in their shared eigenbasis
            let w = random_unitary(n, &mut rng);
            let rotate = |d: CMat| &w * d * w.adjoint();
            let us = (0..k)
                .map(|_| {
                    let phases: Vec<_> = (0..n)
                        .map(|_| cpquant::linalg::C64::from_polar(1.0, rng.random_range(0.0..6.3)))
                        .collect();
                    rotate(CMat::from_diagonal(&nalgebra::DVector::from_vec(phases)))
                })
                .collect();
            let ss = (0..atoms)
                .map(|_| DensityMatrix::new(rotate(diag(&dirichlet_uniform(n, &mut rng)))).unwrap())
                .collect();
            (us, ss)
        } else {
            let us = (0..k).map(|_| random_unitary(n, &mut rng)).collect();
            let ss = (0..atoms).map(|_| random_density(n, &mut rng)).collect();
            (us, ss)
        };
        let spec = TransferSpec::mixed_unitary(weights, unitaries).unwrap();
        let mu = DiscreteMeasure::from_pairs(
            dirichlet_uniform(atoms, &mut rng)
                .into_iter()
                .zip(states)
                .collect(),
        )
        .unwrap();
        let v = check_universal_quantization(&spec, &mu, 64, 1e-9, &mut rng).unwrap();
        if v.agree {
            agree += 1;
        }
        if v.fixed_point_pass {
            fixed_cases += 1;
        }
        if v.pass {
            pass_cases += 1;
        }
    }
    verdict(
        agree == 50 && fixed_cases == 25,
        format!(
            "universal quantization vs fixed atoms: {agree}/50 agree \
             ({pass_cases} pass, {fixed_cases} all-fixed)"
        ),
    )
}

fn criterion_9(instances: &[QuantInstance]) -> Verdict {
    let mut exact = 0;
    let mut identity: f64 = 0.0;
    for q in instances {
        let k = kappa_matrix(&q.f, &q.mu, None).unwrap();
        let m = m_f_array(&q.f, &q.mu).unwrap();
        if k.full == CMat::identity(m.nrows(), m.nrows()).kronecker(&m) && k.block == m {
            exact += 1;
        }
        let o = m_f_operator(
            &StateFunction::constant(1.0),
            &q.mu,
            Some(&q.mu.barycenter()),
        )
        .unwrap();
        identity = identity.max(frobenius_distance(
            &o,
            &CMat::identity(o.nrows(), o.nrows()),
        ));
    }

    let mut rng = seeded(9);
    let mut tomita: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=4);
        let weights = dirichlet_uniform(n, &mut rng);
        let mu = DiscreteMeasure::from_pairs(
            weights
                .into_iter()
                .enumerate()
                .map(|(m, w)| (w, DensityMatrix::basis(n, m)))
                .collect(),
        )
        .unwrap();
        let points: Vec<&CMat> = mu.atoms().iter().map(|a| a.state.matrix()).collect();
        let f = shift_positive(random_function(n, 2, &mut rng), &points, 0.1);
        let g = shift_positive(random_function(n, 2, &mut rng), &points, 0.1);
        let of = m_f_operator(&f, &mu, None).unwrap();
        let og = m_f_operator(&g, &mu, None).unwrap();
        let ofg = m_f_operator(&f.times(g), &mu, None).unwrap();
        tomita = tomita.max(frobenius_distance(&ofg, &(&of * &og)));
    }
    verdict(
        exact == instances.len() && identity <= 1e-10 && tomita <= 1e-10,
        format!(
            "kappa structure: {exact}/{} exact block arrays, |O(1) - I| {identity:.2e}, \
             multiplicativity defect {tomita:.2e}",
            instances.len()
        ),
    )
}

fn cyclic_shift(n: usize) -> CMat {
    let mut s = CMat::zeros(n, n);
    for j in 0..n {
        s[((j + 1) % n, j)] = cr(1.0);
    }
    s
}

fn criterion_10() -> Verdict {
    let mut rng = seeded(10);
    let mut intertwining: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=3);
        let k = rng.random_range(1..=n * n);
        let branches = (0..k)
            .map(|_| {
                let r = rng.random_range(1..=3);
                QuantumChannel::new(random_kraus(n, r, &mut rng), true).unwrap()
            })
            .collect();
        let spec = TransferSpec::new(dirichlet_uniform(k, &mut rng), branches).unwrap();
        let atoms = rng.random_range(1..=4);
        let mu = DiscreteMeasure::from_pairs(
            dirichlet_uniform(atoms, &mut rng)
                .into_iter()
                .map(|w| (w, random_density(n, &mut rng)))
                .collect(),
        )
        .unwrap();
        let pushed = markov_pushforward(&spec, &mu).unwrap();
        let phi_b = spec.induced_apply(&mu.barycenter());
        intertwining = intertwining.max(frobenius_distance(&pushed.barycenter(), &phi_b));
    }

    let mut invariant_checked = 0;
    let mut fixed: f64 = 0.0;
    let mut discrepancy: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=4);
        let shift = cyclic_shift(n);
        let powers: Vec<CMat> = (0..n)
            .scan(CMat::identity(n, n), |acc, _| {
                let current = acc.clone();
                *acc = &shift * &*acc;
                Some(current)
            })
            .collect();
        let spec = TransferSpec::mixed_unitary(vec![1.0 / n as f64; n], powers.clone()).unwrap();
        let omega = random_density(n, &mut rng);
        let mu = DiscreteMeasure::from_pairs(
            powers
                .iter()
                .map(|u| {
                    let s = DensityMatrix::new(u * omega.matrix() * u.adjoint()).unwrap();
                    (1.0 / n as f64, s)
                })
                .collect(),
        )
        .unwrap();
        let pushed = markov_pushforward(&spec, &mu).unwrap();
        let d = pushed.discrepancy(&mu, 1e-10);
        discrepancy = discrepancy.max(d);
        if d <= 1e-10 {
            invariant_checked += 1;
            let b = mu.barycenter();
            fixed = fixed.max(frobenius_distance(&spec.induced_apply(&b), &b));
        }
    }
    verdict(
        intertwining <= 1e-10 && invariant_checked == 20 && fixed <= 1e-9,
        format!(
            "Markov pushforward: intertwining residual {intertwining:.2e} over 100 instances, \
             {invariant_checked}/20 invariant measures (discrepancy {discrepancy:.2e}) \
             with barycenter defect {fixed:.2e}"
        ),
    )
}

fn criterion_11() -> Verdict {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map(|entries| {
            entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    let run = |file: &PathBuf| {
        let out = Command::new(env!("CARGO_BIN_EXE_cpquant"))
            .arg("run")
            .arg(file)
            .output()
            .expect("binary runs");
        let stream = if out.status.success() {
            out.stdout
        } else {
            out.stderr
        };
        let value: Option<serde_json::Value> = serde_json::from_slice(&stream).ok();
        (out.status.code(), value.map(|v| strip_timestamp(&v)))
    };
    let mut reproduced = 0;
    let mut failures = Vec::new();
    for file in &files {
        let (a, b) = (run(file), run(file));
        if a.1.is_some() && a == b {
            reproduced += 1;
        } else {
            failures.push(file.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    verdict(
        !files.is_empty() && failures.is_empty(),
        format!(
            "scenario determinism: {reproduced}/{} reports reproduced{}",
            files.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(", differing: {}", failures.join(", "))
            }
        ),
    )
}

fn main() -> ExitCode {
    let runs = cnot_runs();
    let start = Instant::now();
    let instances = quant_instances();
    let generation = start.elapsed().as_secs_f64();

    let results = [
        criterion_1(),
        criterion_2(&runs),
        criterion_3(&runs),
        criterion_4(),
        criterion_5(),
        criterion_6(&instances, generation),
        criterion_7(),
        criterion_8(),
        criterion_9(&instances),
        criterion_10(),
        criterion_11(),
    ];
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag}  {}", i + 1, r.detail);
        if !r.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all {} acceptance criteria passed", results.len());
        ExitCode::SUCCESS
    }
}
