// temporary probe: does a symmetrized-lower-triangle eigensolve reproduce the
// reference acceptance rate (0.345%)?
use fractalforge::chaos::{chaos_game, ChaosConfig};
use fractalforge::ifs::{sample_naive, sample_system_size, IfsSystem};
use fractalforge::linalg::Mat3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// eigh-style: build S = tril(A) + tril(A,-1)^T, eigenvalues of symmetric S.
fn tril_sym_extremes(a: &Mat3) -> (f64, f64) {
    let mut s = Mat3::ZERO;
    for i in 0..3 {
        for j in 0..=i {
            s[(i, j)] = a[(i, j)];
            s[(j, i)] = a[(i, j)];
        }
    }
    let eig = fractalforge::linalg::sym_eigenvalues(&s); // descending, signed
    let mods = [eig[0].abs(), eig[1].abs(), eig[2].abs()];
    let mx = mods.iter().cloned().fold(0.0, f64::max);
    let mn = mods.iter().cloned().fold(f64::INFINITY, f64::min);
    (mx, mn)
}

fn tsf_tril(sys: &IfsSystem, eps: f64) -> bool {
    let mut ok = true;
    for m in sys.maps() {
        let (mx, mn) = tril_sym_extremes(&m.a);
        if mx >= 1.0 {
            return false;
        }
        ok &= mn >= eps;
    }
    ok
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let total = 2_000_000u64;
    let mut pass = 0u64;
    let mut accepted = Vec::new();
    for _ in 0..total {
        let n = sample_system_size(&mut rng);
        let sys = sample_naive(&mut rng, n).unwrap();
        if tsf_tril(&sys, 0.2) {
            pass += 1;
            if accepted.len() < 3000 {
                accepted.push(sys);
            }
        }
    }
    println!("tril-sym acceptance = {:.4}% ({} hits)", 100.0 * pass as f64 / total as f64, pass);
    let cfg = ChaosConfig::default();
    let mut diverged = 0u64;
    for (i, sys) in accepted.iter().enumerate() {
        let mut crng = ChaCha8Rng::seed_from_u64(20_000 + i as u64);
        if chaos_game(sys, &cfg, &mut crng).is_err() {
            diverged += 1;
        }
    }
    println!("tril-accepted tested = {}, diverged = {diverged}", accepted.len());
}
