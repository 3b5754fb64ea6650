//! MIMO block-fading channel: fading draw, transmission, and noise.
//!
//! Fading is i.i.d. circularly-symmetric complex Gaussian with unit
//! variance per entry, constant over one chunk. Noise is i.i.d.
//! CN(0, σ²) per received sample.

use crate::linalg::CMat;
use crate::scalar::Real;
use crate::Cplx;
use ndarray::ArrayView2;
use rand::Rng;
use rand_distr::StandardNormal;

/// One CN(0, variance) sample.
fn cn_sample<T: Real>(variance: T, rng: &mut impl Rng) -> Cplx<T> {
    let half = (variance / (T::one() + T::one())).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Cplx::new(T::from_f64_lossy(re) * half, T::from_f64_lossy(im) * half)
}

/// Draw an `antennas × users` fading matrix, entries i.i.d. CN(0,1).
pub fn draw_channel<T: Real>(antennas: usize, users: usize, rng: &mut impl Rng) -> CMat<T> {
    CMat::from_shape_fn((antennas, users), |_| cn_sample(T::one(), rng))
}

/// An `rows × cols` noise matrix, entries i.i.d. CN(0, sigma2).
pub fn draw_noise<T: Real>(
    rows: usize,
    cols: usize,
    sigma2: T,
    rng: &mut impl Rng,
) -> CMat<T> {
    CMat::from_shape_fn((rows, cols), |_| cn_sample(sigma2, rng))
}

/// Push a chunk through the channel: `Y = H·X + N` with CN(0, sigma2)
/// noise. `h` is `M × K`, `x` is `K × T`; handles `K = 0` (noise only).
pub fn transmit<T: Real>(
    h: &ArrayView2<'_, Cplx<T>>,
    x: &ArrayView2<'_, Cplx<T>>,
    sigma2: T,
    rng: &mut impl Rng,
) -> CMat<T> {
    assert_eq!(h.ncols(), x.nrows(), "user counts of H and X must agree");
    let mut y = draw_noise(h.nrows(), x.ncols(), sigma2, rng);
    if h.ncols() > 0 {
        y = y + h.dot(x);
    }
    y
}
