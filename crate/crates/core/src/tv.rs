//! Anisotropic squared total variation.

use crate::tensor::{Element, Tensor};

/// Sum over every plane of squared forward differences along both axes.
pub fn total_variation<T: Element>(image: &Tensor<T>) -> f64 {
    let s = image.shape();
    let mut total = 0.0f64;
    for n in 0..s.batch {
        for c in 0..s.channels {
            let plane = image.plane(n, c);
            for y in 0..s.height {
                let row = &plane[y * s.width..(y + 1) * s.width];
                for x in 0..s.width {
                    let v = row[x].to_f64();
                    if x + 1 < s.width {
                        let d = row[x + 1].to_f64() - v;
                        total += d * d;
                    }
                    if y + 1 < s.height {
                        let d = plane[(y + 1) * s.width + x].to_f64() - v;
                        total += d * d;
                    }
                }
            }
        }
    }
    total
}

/// Gradient of `scale * total_variation(image)` with respect to `image`.
pub fn total_variation_backward<T: Element>(image: &Tensor<T>, scale: f64) -> Tensor<T> {
    let s = image.shape();
    let mut grad = vec![0.0f64; image.len()];
    let w = s.width;
    for n in 0..s.batch {
        for c in 0..s.channels {
            let base = (n * s.channels + c) * s.plane();
            let plane = image.plane(n, c);
            let g = &mut grad[base..base + s.plane()];
            for y in 0..s.height {
                for x in 0..w {
                    let i = y * w + x;
                    let v = plane[i].to_f64();
                    if x + 1 < w {
                        let d = plane[i + 1].to_f64() - v;
                        g[i + 1] += 2.0 * d;
                        g[i] -= 2.0 * d;
                    }
                    if y + 1 < s.height {
                        let d = plane[i + w].to_f64() - v;
                        g[i + w] += 2.0 * d;
                        g[i] -= 2.0 * d;
                    }
                }
            }
        }
    }
    Tensor::from_vec(s, grad.into_iter().map(|v| T::from_f64(v * scale)).collect())
        .expect("gradient has the image shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn constant_image_has_zero_tv() {
        let t = Tensor::<f32>::full(Shape::new(1, 1, 5, 7), 0.3);
        assert_eq!(total_variation(&t), 0.0);
    }

    #[test]
    fn single_horizontal_difference() {
        let t = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 2), vec![0.0, 1.0]).unwrap();
        assert_eq!(total_variation(&t), 1.0);
    }

    #[test]
    fn gradient_of_single_difference() {
        let t = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 2), vec![0.0, 1.0]).unwrap();
        let g = total_variation_backward(&t, 1.0);
        assert_eq!(g.data(), &[-2.0, 2.0]);
    }
}
