use super::Heightmap;
use crate::Real;

/// Normalized Gaussian weights for offsets `-r..=r` cells, truncated at 3σ.
/// Returns `[1]` when `sigma_cells` is zero.
pub fn gaussian_kernel<T: Real>(sigma_cells: T) -> Vec<T> {
    if !(sigma_cells > T::zero()) {
        return vec![T::one()];
    }
    let radius = (T::lit(3.0) * sigma_cells).ceil().to_usize().unwrap_or(0);
    let two_var = T::lit(2.0) * sigma_cells * sigma_cells;
    let mut w: Vec<T> = (0..=2 * radius)
        .map(|k| {
            let d = T::from_usize(k).unwrap() - T::from_usize(radius).unwrap();
            (-(d * d) / two_var).exp()
        })
        .collect();
    let total: T = w.iter().copied().sum();
    for v in &mut w {
        *v = *v / total;
    }
    w
}

/// Separable Gaussian low-pass of a heightmap with edge-replicate padding.
///
/// `sigma` is in meters and converted to cells through the grid resolution.
/// `sigma == 0` returns an exact copy.
pub fn gaussian_smooth<T: Real>(map: &Heightmap<T>, sigma: T) -> Heightmap<T> {
    let spec = *map.spec();
    if !(sigma > T::zero()) {
        return map.clone();
    }
    let kernel = gaussian_kernel(sigma / spec.resolution);
    let radius = kernel.len() / 2;
    let (nx, ny) = (spec.nx, spec.ny);
    let src = map.heights();

    let mut tmp = vec![T::zero(); src.len()];
    for j in 0..ny {
        let row = &src[j * nx..(j + 1) * nx];
        for i in 0..nx {
            // offsets from the centre value keep constant maps exact
            let c = row[i];
            let mut acc = T::zero();
            for (k, &w) in kernel.iter().enumerate() {
                let ii = (i + k).saturating_sub(radius).min(nx - 1);
                acc = acc + w * (row[ii] - c);
            }
            tmp[j * nx + i] = c + acc;
        }
    }

    let mut out = vec![T::zero(); src.len()];
    for j in 0..ny {
        for i in 0..nx {
            let c = tmp[j * nx + i];
            let mut acc = T::zero();
            for (k, &w) in kernel.iter().enumerate() {
                let jj = (j + k).saturating_sub(radius).min(ny - 1);
                acc = acc + w * (tmp[jj * nx + i] - c);
            }
            out[j * nx + i] = c + acc;
        }
    }
    Heightmap::new(spec, out).expect("smoothing preserves grid layout and finiteness")
}

/// RMS of the mean-removed smoothed heights over the RMS of the input, on
/// cells at least `margin` meters from every edge. `None` when no interior
/// cell remains or the input is constant there.
pub fn attenuation<T: Real>(input: &Heightmap<T>, smoothed: &Heightmap<T>, margin: T) -> Option<T> {
    let spec = *input.spec();
    if smoothed.spec() != &spec {
        return None;
    }
    let m = (margin / spec.resolution)
        .ceil()
        .to_usize()
        .unwrap_or(usize::MAX);
    if 2 * m >= spec.nx || 2 * m >= spec.ny {
        return None;
    }
    let rms = |h: &Heightmap<T>| {
        let mut vals = Vec::with_capacity((spec.nx - 2 * m) * (spec.ny - 2 * m));
        for j in m..spec.ny - m {
            for i in m..spec.nx - m {
                vals.push(h.heights()[spec.index(i, j)]);
            }
        }
        let n = T::from_usize(vals.len()).unwrap();
        let mean = vals.iter().copied().sum::<T>() / n;
        (vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n).sqrt()
    };
    let a = rms(input);
    if !(a > T::zero()) {
        return None;
    }
    Some(rms(smoothed) / a)
}
