//! Separable smoothing and block downsampling on x-fastest grids.

use rayon::prelude::*;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Gaussian blur with standard deviation `sigma` voxels on every axis.
///
/// The kernel is truncated at 3σ and renormalised where it overhangs the grid
/// edge. `sigma <= 0` returns the input unchanged.
pub fn gaussian_smooth(data: &[f32], dims: [usize; 3], sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let mut buf: Vec<f64> = data.iter().map(|&v| v as f64).collect();
    for axis in 0..3 {
        buf = smooth_axis(&buf, dims, axis, &kernel);
    }
    buf.into_iter().map(|v| v as f32).collect()
}

fn smooth_axis(src: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let n = dims[axis];
    let radius = kernel.len() / 2;
    let stride = [1, nx, nx * ny][axis];
    let starts: Vec<usize> = match axis {
        0 => (0..ny * nz).map(|yz| yz * nx).collect(),
        1 => (0..nz).flat_map(|z| (0..nx).map(move |x| x + nx * ny * z)).collect(),
        _ => (0..nx * ny).collect(),
    };
    let lines: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&start| {
            (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(radius);
                    let hi = (i + radius).min(n - 1);
                    let (mut acc, mut wsum) = (0.0, 0.0);
                    for j in lo..=hi {
                        let w = kernel[j + radius - i];
                        acc += w * src[start + j * stride];
                        wsum += w;
                    }
                    acc / wsum
                })
                .collect()
        })
        .collect();
    let mut out = vec![0f64; src.len()];
    for (start, line) in starts.iter().zip(lines) {
        for (i, v) in line.into_iter().enumerate() {
            out[start + i * stride] = v;
        }
    }
    out
}

/// Averages non-overlapping `factor³` blocks. Output dims are `max(1, n / factor)`;
/// a trailing partial block is dropped.
pub fn block_mean(data: &[f32], dims: [usize; 3], factor: usize) -> (Vec<f32>, [usize; 3]) {
    if factor <= 1 {
        return (data.to_vec(), dims);
    }
    let out_dims = dims.map(|d| (d / factor).max(1));
    let [ox, oy, oz] = out_dims;
    let [nx, ny, nz] = dims;
    let mut out = vec![0f32; ox * oy * oz];
    out.par_chunks_mut(ox * oy).enumerate().for_each(|(z, slab)| {
        for y in 0..oy {
            for x in 0..ox {
                let mut acc = 0f64;
                let mut count = 0usize;
                for dz in 0..factor {
                    let sz = z * factor + dz;
                    if sz >= nz {
                        continue;
                    }
                    for dy in 0..factor {
                        let sy = y * factor + dy;
                        if sy >= ny {
                            continue;
                        }
                        for dx in 0..factor {
                            let sx = x * factor + dx;
                            if sx >= nx {
                                continue;
                            }
                            acc += data[sx + nx * (sy + ny * sz)] as f64;
                            count += 1;
                        }
                    }
                }
                slab[x + ox * y] = (acc / count as f64) as f32;
            }
        }
    });
    (out, out_dims)
}
