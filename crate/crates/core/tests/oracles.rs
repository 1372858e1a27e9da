//! Independent oracles for the network, POP and relaxation layers.

use momentnet::fixture;
use momentnet::hierarchy::moment_matrix;
use momentnet::moment::{assemble_relaxation, dirac_moments, localizing_block, moment_block, TmsIndex};
use momentnet::net::{
    generate_synthetic, generate_with_coefficients, numeric_forward, random_coefficients, random_network,
    scale_equivalence_witness, symbolic_forward, NoiseMode, Sample, TrainingSet,
};
use momentnet::poly::{basis, binomial, Polynomial};
use momentnet::pop::{averaged_residual, build_pop, loss_eval, PopInstance};
use momentnet::sdp::{solve_sdp, verify_moments, verify_solution, SdpStatus, SolverOptions};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

#[test]
fn averaged_residual_matches_numeric_averaging() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let net = random_network(&[3, 3, 2, 2], &[2, 2], &mut rng).unwrap();
        let samples: Vec<Sample> = (0..3)
            .map(|_| Sample {
                x: random_point(&mut rng, 3, 1.0),
                y: random_point(&mut rng, 2, 2.0),
            })
            .collect();
        let data = TrainingSet::new(samples).unwrap();
        let res = averaged_residual(&net, &data).unwrap();
        let c = random_point(&mut rng, net.n_coefficients(), 2.0);
        let mut z = c.clone();
        z.push(0.7);
        let symbolic = res.eval(&z).unwrap();
        let mut expected = vec![0.0; 2];
        for s in &data.samples {
            let out = numeric_forward(&net, &c, &s.x).unwrap();
            for j in 0..2 {
                expected[j] += (out[j] - s.y[j]) / 3.0;
            }
        }
        for (a, b) in symbolic.iter().zip(&expected) {
            assert!(rel_close(*a, *b, 1e-10), "{a} vs {b}");
        }
        // loss is the sup norm of the same vector
        let loss = loss_eval(&net, &data, &c).unwrap();
        let sup = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(rel_close(loss, sup, 1e-10));
    }
}

#[test]
fn exact_fit_sample_has_zero_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = random_network(&[2, 3, 3, 2], &[2, 1], &mut rng).unwrap();
    let c0 = random_coefficients(&net, &mut rng);
    let x = random_point(&mut rng, 2, 1.0);
    let y = numeric_forward(&net, &c0, &x).unwrap();
    let data = TrainingSet::new(vec![Sample { x, y }]).unwrap();
    assert!(loss_eval(&net, &data, &c0).unwrap() < 1e-12);
}

#[test]
fn symbolic_forward_agrees_with_numeric_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dims_degs in [
        (vec![3, 4, 2], vec![3]),
        (vec![2, 3, 3, 2], vec![2, 3]),
        (vec![2, 2, 2, 2, 3], vec![1, 2, 1]),
    ] {
        let net = random_network(&dims_degs.0, &dims_degs.1, &mut rng).unwrap();
        for _ in 0..5 {
            let x = random_point(&mut rng, net.input_dim(), 1.0);
            let c = random_point(&mut rng, net.n_coefficients(), 2.0);
            let sym = symbolic_forward(&net, &x).unwrap();
            let num = numeric_forward(&net, &c, &x).unwrap();
            for (p, v) in sym.iter().zip(&num) {
                assert!(rel_close(p.eval(&c).unwrap(), *v, 1e-10));
            }
        }
    }
}

#[test]
fn rescaling_the_first_layer_is_invisible() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let net = random_network(&[3, 4, 4, 2], &[1, 1], &mut rng).unwrap();
    for tau in [2.0, -1.0, 0.3] {
        let c = [
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ];
        let x = random_point(&mut rng, 3, 1.0);
        let (a, b) = scale_equivalence_witness(&net, c, tau, &x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!(rel_close(*u, *v, 1e-12), "tau {tau}: {u} vs {v}");
        }
    }
}

#[test]
fn averaged_noise_norm_concentrates() {
    // m = 20, N = 50, sigma = 1e-2: E||mean eps||^2 = sigma^2 m / N
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = random_network(&[2, 2, 20], &[1], &mut rng).unwrap();
    let c = random_coefficients(&net, &mut rng);
    let expected = 1e-2 * (20.0f64 / 50.0).sqrt();
    let mut sum_sq = 0.0;
    for seed in 0..1000u64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = generate_with_coefficients(&net, &c, 50, 1e-2, NoiseMode::PerSample, seed, &mut r).unwrap();
        let norm = data.provenance.unwrap().mean_noise_norm();
        assert!(norm < 3.0 * expected && norm > expected / 3.0, "seed {seed}: {norm}");
        sum_sq += norm * norm;
    }
    let rms = (sum_sq / 1000.0).sqrt();
    assert!((rms / expected - 1.0).abs() < 0.05, "{rms} vs {expected}");
}

#[test]
fn noiseless_data_has_zero_loss_at_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = random_network(&[3, 3, 3, 3], &[2, 2], &mut rng).unwrap();
    let data = generate_synthetic(&net, 7, 0.0, 99).unwrap();
    let c = data.provenance.as_ref().unwrap().c_true.clone();
    assert!(loss_eval(&net, &data, &c).unwrap() < 1e-10);
}

#[test]
fn fixture_relaxation_sizes() {
    let pop = build_pop(&fixture::network(), &fixture::training_set()).unwrap();
    assert_eq!(pop.n_vars(), 5);
    assert_eq!(pop.constraints().len(), 8);
    let relax = assemble_relaxation(&pop, 2).unwrap();
    assert_eq!(relax.index.len(), binomial(9, 4));
    assert_eq!(relax.index.len(), 126);
    let mut sizes = vec![binomial(7, 2)];
    sizes.extend(std::iter::repeat_n(binomial(6, 1), 8));
    assert_eq!(relax.block_sizes(), sizes);
}

#[test]
fn lower_order_moment_block_is_a_leading_submatrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let idx = TmsIndex::new(3, 6);
    let w: Vec<f64> = (0..idx.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let full = moment_block(3, &idx).unwrap().evaluate(&w);
    for k in 0..3 {
        let small = moment_block(k, &idx).unwrap().evaluate(&w);
        let s = small.nrows();
        assert_eq!(s, binomial(3 + k, k));
        assert_eq!(small, full.view((0, 0), (s, s)).into_owned());
        assert_eq!(small, moment_matrix(&idx, &w, k));
    }
}

#[test]
fn dirac_localizing_matrix_is_scaled_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 2;
    let idx = TmsIndex::new(n, 4);
    let p = &Polynomial::constant(n, 1.0)
        - &(&(&Polynomial::variable(n, 0) * &Polynomial::variable(n, 0))
            + &(&Polynomial::variable(n, 1) * &Polynomial::variable(n, 1)));
    for _ in 0..20 {
        let u = random_point(&mut rng, n, 1.3);
        let w = dirac_moments(&idx, &u);
        let block = localizing_block(&p, 2, &idx).unwrap().evaluate(&w);
        let v = DVector::from_iterator(3, basis(n, 1).iter().map(|m| m.eval(&u)));
        let pu = p.eval(&u).unwrap();
        let expected = &v * v.transpose() * pu;
        assert!((&block - &expected).amax() < 1e-12);
        let min_eig = block.symmetric_eigenvalues().min();
        if pu >= 0.0 {
            assert!(min_eig >= -1e-12);
        } else {
            assert!(min_eig < 0.0);
        }
    }
}

#[test]
fn dirac_moments_of_feasible_points_pass_verification() {
    let pop = build_pop(&fixture::network(), &fixture::training_set()).unwrap();
    let relax = assemble_relaxation(&pop, 2).unwrap();
    let mut z = fixture::C_STAR.to_vec();
    z.push(0.5);
    let w = dirac_moments(&relax.index, &z);
    assert!(verify_moments(&relax, &w).min_eigenvalue() >= -1e-12);

    // a negated entry on the diagonal of M_k breaks positivity
    let mut bad = w.clone();
    let square = relax
        .index
        .position(&momentnet::poly::Monomial::new(vec![2, 0, 0, 0, 0]))
        .unwrap();
    bad[square] = -bad[square] - 1.0;
    assert!(verify_moments(&relax, &bad).min_eigenvalue() < 0.0);
}

#[test]
fn solver_output_on_toy_relaxation_is_psd() {
    // min z s.t. z >= 0 at k = 1: optimum 0 with M_1 = [[1, 0], [0, 0]]
    let pop = PopInstance::new(1, vec![Polynomial::variable(1, 0)]).unwrap();
    let relax = assemble_relaxation(&pop, 1).unwrap();
    let sol = solve_sdp(&relax, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert!(sol.primal_obj.abs() < 1e-7);
    assert!(verify_solution(&relax, &sol).min_eigenvalue() >= -1e-7);
}
