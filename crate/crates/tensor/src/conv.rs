//! Patch gathering (`im2col`) and its adjoint for 2-D cross-correlation.

use crate::error::{shape_err, Result};
use crate::par;

/// Spatial bookkeeping for one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        in_h: usize,
        in_w: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(shape_err("conv2d", "stride must be positive"));
        }
        let ph = in_h + 2 * padding;
        let pw = in_w + 2 * padding;
        if kernel_h == 0 || kernel_w == 0 || kernel_h > ph || kernel_w > pw {
            return Err(shape_err(
                "conv2d",
                format!("kernel {kernel_h}x{kernel_w} does not fit padded input {ph}x{pw}"),
            ));
        }
        Ok(Self {
            in_h,
            in_w,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h: (ph - kernel_h) / stride + 1,
            out_w: (pw - kernel_w) / stride + 1,
        })
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn kernel_area(&self) -> usize {
        self.kernel_h * self.kernel_w
    }

    /// Input coordinate read by output `(oy, ox)` at kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky) as isize - self.padding as isize;
        let x = (ox * self.stride + kx) as isize - self.padding as isize;
        if y < 0 || x < 0 || y >= self.in_h as isize || x >= self.in_w as isize {
            None
        } else {
            Some((y as usize, x as usize))
        }
    }
}

/// Gathers `channels` input planes of one image into a
/// `[channels·kh·kw, out_h·out_w]` matrix.
pub fn im2col(image: &[f32], channels: usize, g: &ConvGeometry, cols: &mut [f32]) {
    let plane = g.in_h * g.in_w;
    let taps = g.kernel_area();
    let opix = g.out_pixels();
    debug_assert_eq!(image.len(), channels * plane);
    debug_assert_eq!(cols.len(), channels * taps * opix);
    par::for_each_chunk_mut(cols, opix, |row, out| {
        let c = row / taps;
        let ky = (row % taps) / g.kernel_w;
        let kx = row % g.kernel_w;
        let src = &image[c * plane..(c + 1) * plane];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                out[oy * g.out_w + ox] = match g.source(oy, ox, ky, kx) {
                    Some((y, x)) => src[y * g.in_w + x],
                    None => 0.0,
                };
            }
        }
    });
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image,
/// adding to what is already there.
pub fn col2im(cols: &[f32], channels: usize, g: &ConvGeometry, image: &mut [f32]) {
    let plane = g.in_h * g.in_w;
    let taps = g.kernel_area();
    let opix = g.out_pixels();
    debug_assert_eq!(image.len(), channels * plane);
    debug_assert_eq!(cols.len(), channels * taps * opix);
    // Each channel plane is owned by one task, taps accumulate in fixed order.
    par::for_each_chunk_mut(image, plane, |c, dst| {
        for t in 0..taps {
            let ky = t / g.kernel_w;
            let kx = t % g.kernel_w;
            let row = &cols[(c * taps + t) * opix..(c * taps + t + 1) * opix];
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    if let Some((y, x)) = g.source(oy, ox, ky, kx) {
                        dst[y * g.in_w + x] += row[oy * g.out_w + ox];
                    }
                }
            }
        }
    });
}
