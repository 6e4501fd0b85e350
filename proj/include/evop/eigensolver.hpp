#pragma once

#include "evop/common.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace evop {

// Eigenvalues and right eigenvectors of a real square matrix, computed by
// Householder reduction to upper Hessenberg form followed by Francis
// double-shift QR iteration to real Schur form (EISPACK hqr2 lineage), with
// eigenvectors recovered by back-substitution on the quasi-triangular factor.
//
// Complex eigenvalues come out in conjugate pairs. Vectors are unnormalized;
// callers impose their own scaling convention.
struct EigenResult {
  CVector values;
  CMatrix vectors;  // columns are right eigenvectors
};

namespace detail {

// Complex division (a + ib) / (c + id) without overflow (Smith's method).
inline void complex_div(double a, double b, double c, double d, double& out_r,
                        double& out_i) {
  if (std::abs(c) > std::abs(d)) {
    const double r = d / c;
    const double den = c + d * r;
    out_r = (a + b * r) / den;
    out_i = (b - a * r) / den;
  } else {
    const double r = c / d;
    const double den = c * r + d;
    out_r = (a * r + b) / den;
    out_i = (b * r - a) / den;
  }
}

// Householder similarity reduction to upper Hessenberg form, accumulating
// the orthogonal transform in V.
inline void hessenberg_reduce(Matrix& H, Matrix& V) {
  const Index n = H.rows();
  Vector ort = Vector::Zero(n);
  const Index low = 0;
  const Index high = n - 1;

  for (Index m = low + 1; m <= high - 1; ++m) {
    double scale = 0.0;
    for (Index i = m; i <= high; ++i) scale += std::abs(H(i, m - 1));
    if (scale == 0.0) continue;

    double h = 0.0;
    for (Index i = high; i >= m; --i) {
      ort[i] = H(i, m - 1) / scale;
      h += ort[i] * ort[i];
    }
    double g = std::sqrt(h);
    if (ort[m] > 0.0) g = -g;
    h -= ort[m] * g;
    ort[m] -= g;

    // Apply (I - u u^T / h) from both sides.
    for (Index j = m; j < n; ++j) {
      double f = 0.0;
      for (Index i = high; i >= m; --i) f += ort[i] * H(i, j);
      f /= h;
      for (Index i = m; i <= high; ++i) H(i, j) -= f * ort[i];
    }
    for (Index i = 0; i <= high; ++i) {
      double f = 0.0;
      for (Index j = high; j >= m; --j) f += ort[j] * H(i, j);
      f /= h;
      for (Index j = m; j <= high; ++j) H(i, j) -= f * ort[j];
    }
    // Accumulate the reflector into V immediately (the classic deferred
    // ortran pass would need the stashed Householder tails instead).
    for (Index j = 0; j < n; ++j) {
      double f = 0.0;
      for (Index i = m; i <= high; ++i) f += ort[i] * V(i, j);
      f /= h;
      for (Index i = m; i <= high; ++i) V(i, j) -= f * ort[i];
    }
    H(m, m - 1) = scale * g;
  }
}

}  // namespace detail

// Computes eigenvalues and right eigenvectors of a real matrix.
// `max_iters` caps the total QR iterations (default 100 d per the
// dependency-light shifted-QR design); exceeding it raises numeric_error
// with the count of eigenvalues already isolated.
inline EigenResult eig_real(const Matrix& A, Index max_iters = -1) {
  const Index nn = A.rows();
  if (A.cols() != nn || nn == 0) {
    throw std::invalid_argument("eig_real: matrix must be square and non-empty");
  }
  if (!A.allFinite()) throw std::invalid_argument("eig_real: matrix has NaN/Inf");
  if (max_iters < 0) max_iters = 100 * nn;

  if (nn == 1) {
    EigenResult res;
    res.values = CVector::Constant(1, Complex(A(0, 0), 0.0));
    res.vectors = CMatrix::Constant(1, 1, Complex(1.0, 0.0));
    return res;
  }

  Matrix H = A;
  Matrix V = Matrix::Identity(nn, nn);
  // Accumulate V as rows: the reduction above applies u from the left onto V;
  // start from identity so V ends orthogonal with H = V^T A V.
  detail::hessenberg_reduce(H, V);
  // hessenberg_reduce accumulated Q^T; transpose to get Q with A = Q H Q^T.
  V.transposeInPlace();

  Vector d = Vector::Zero(nn);  // real parts
  Vector e = Vector::Zero(nn);  // imaginary parts

  const Index low = 0;
  const Index high = nn - 1;
  const double eps = std::pow(2.0, -52.0);
  double exshift = 0.0;
  double p = 0, q = 0, r = 0, s = 0, z = 0, t, w, x, y;

  double norm = 0.0;
  for (Index i = 0; i < nn; ++i) {
    for (Index j = std::max<Index>(i - 1, 0); j < nn; ++j) {
      norm += std::abs(H(i, j));
    }
  }
  if (norm == 0.0) {
    // Zero matrix: eigenvalues 0, standard basis vectors.
    EigenResult res;
    res.values = CVector::Zero(nn);
    res.vectors = CMatrix::Identity(nn, nn);
    return res;
  }

  Index n = nn - 1;
  Index iter = 0;
  Index total_iters = 0;
  while (n >= low) {
    // Look for a single small subdiagonal element.
    Index l = n;
    while (l > low) {
      s = std::abs(H(l - 1, l - 1)) + std::abs(H(l, l));
      if (s == 0.0) s = norm;
      if (std::abs(H(l, l - 1)) < eps * s) break;
      --l;
    }

    if (l == n) {
      // One real root found.
      H(n, n) += exshift;
      d[n] = H(n, n);
      e[n] = 0.0;
      --n;
      iter = 0;
    } else if (l == n - 1) {
      // Two roots (real pair or complex conjugate pair).
      w = H(n, n - 1) * H(n - 1, n);
      p = (H(n - 1, n - 1) - H(n, n)) / 2.0;
      q = p * p + w;
      z = std::sqrt(std::abs(q));
      H(n, n) += exshift;
      H(n - 1, n - 1) += exshift;
      x = H(n, n);

      if (q >= 0) {
        // Real pair.
        z = (p >= 0) ? p + z : p - z;
        d[n - 1] = x + z;
        d[n] = d[n - 1];
        if (z != 0.0) d[n] = x - w / z;
        e[n - 1] = 0.0;
        e[n] = 0.0;
        x = H(n, n - 1);
        s = std::abs(x) + std::abs(z);
        p = x / s;
        q = z / s;
        r = std::sqrt(p * p + q * q);
        p /= r;
        q /= r;
        for (Index j = n - 1; j < nn; ++j) {
          z = H(n - 1, j);
          H(n - 1, j) = q * z + p * H(n, j);
          H(n, j) = q * H(n, j) - p * z;
        }
        for (Index i = 0; i <= n; ++i) {
          z = H(i, n - 1);
          H(i, n - 1) = q * z + p * H(i, n);
          H(i, n) = q * H(i, n) - p * z;
        }
        for (Index i = low; i <= high; ++i) {
          z = V(i, n - 1);
          V(i, n - 1) = q * z + p * V(i, n);
          V(i, n) = q * V(i, n) - p * z;
        }
      } else {
        // Complex pair.
        d[n - 1] = x + p;
        d[n] = x + p;
        e[n - 1] = z;
        e[n] = -z;
      }
      n -= 2;
      iter = 0;
    } else {
      // No convergence yet: form shift.
      x = H(n, n);
      y = 0.0;
      w = 0.0;
      if (l < n) {
        y = H(n - 1, n - 1);
        w = H(n, n - 1) * H(n - 1, n);
      }

      // Exceptional shifts.
      if (iter == 10) {
        exshift += x;
        for (Index i = low; i <= n; ++i) H(i, i) -= x;
        s = std::abs(H(n, n - 1)) + std::abs(H(n - 1, n - 2));
        x = y = 0.75 * s;
        w = -0.4375 * s * s;
      }
      if (iter == 30) {
        s = (y - x) / 2.0;
        s = s * s + w;
        if (s > 0) {
          s = std::sqrt(s);
          if (y < x) s = -s;
          s = x - w / ((y - x) / 2.0 + s);
          for (Index i = low; i <= n; ++i) H(i, i) -= s;
          exshift += s;
          x = y = w = 0.964;
        }
      }

      ++iter;
      if (++total_iters > max_iters) {
        throw numeric_error(
            "eig_real: QR iteration cap of " + std::to_string(max_iters) +
            " exceeded with " + std::to_string(nn - 1 - n) + " of " +
            std::to_string(nn) + " eigenvalues isolated");
      }

      // Look for two consecutive small subdiagonal elements.
      Index m = n - 2;
      while (m >= l) {
        z = H(m, m);
        r = x - z;
        s = y - z;
        p = (r * s - w) / H(m + 1, m) + H(m, m + 1);
        q = H(m + 1, m + 1) - z - r - s;
        r = H(m + 2, m + 1);
        s = std::abs(p) + std::abs(q) + std::abs(r);
        p /= s;
        q /= s;
        r /= s;
        if (m == l) break;
        if (std::abs(H(m, m - 1)) * (std::abs(q) + std::abs(r)) <
            eps * (std::abs(p) * (std::abs(H(m - 1, m - 1)) + std::abs(z) +
                                  std::abs(H(m + 1, m + 1))))) {
          break;
        }
        --m;
      }
      for (Index i = m + 2; i <= n; ++i) {
        H(i, i - 2) = 0.0;
        if (i > m + 2) H(i, i - 3) = 0.0;
      }

      // Double QR step on rows l..n, columns m..n.
      for (Index k = m; k <= n - 1; ++k) {
        const bool notlast = (k != n - 1);
        if (k != m) {
          p = H(k, k - 1);
          q = H(k + 1, k - 1);
          r = notlast ? H(k + 2, k - 1) : 0.0;
          x = std::abs(p) + std::abs(q) + std::abs(r);
          if (x == 0.0) continue;
          p /= x;
          q /= x;
          r /= x;
        }
        s = std::sqrt(p * p + q * q + r * r);
        if (p < 0) s = -s;
        if (s != 0) {
          if (k != m) {
            H(k, k - 1) = -s * x;
          } else if (l != m) {
            H(k, k - 1) = -H(k, k - 1);
          }
          p += s;
          x = p / s;
          y = q / s;
          z = r / s;
          q /= p;
          r /= p;

          for (Index j = k; j < nn; ++j) {
            p = H(k, j) + q * H(k + 1, j);
            if (notlast) {
              p += r * H(k + 2, j);
              H(k + 2, j) -= p * z;
            }
            H(k, j) -= p * x;
            H(k + 1, j) -= p * y;
          }
          for (Index i = 0; i <= std::min(n, k + 3); ++i) {
            p = x * H(i, k) + y * H(i, k + 1);
            if (notlast) {
              p += z * H(i, k + 2);
              H(i, k + 2) -= p * r;
            }
            H(i, k) -= p;
            H(i, k + 1) -= p * q;
          }
          for (Index i = low; i <= high; ++i) {
            p = x * V(i, k) + y * V(i, k + 1);
            if (notlast) {
              p += z * V(i, k + 2);
              V(i, k + 2) -= p * r;
            }
            V(i, k) -= p;
            V(i, k + 1) -= p * q;
          }
        }
      }
    }
  }

  // Back-substitute eigenvectors of the quasi-triangular Schur factor.
  for (n = nn - 1; n >= 0; --n) {
    p = d[n];
    q = e[n];

    if (q == 0.0) {
      // Real eigenvector.
      Index l = n;
      H(n, n) = 1.0;
      for (Index i = n - 1; i >= 0; --i) {
        w = H(i, i) - p;
        r = 0.0;
        for (Index j = l; j <= n; ++j) r += H(i, j) * H(j, n);
        if (e[i] < 0.0) {
          z = w;
          s = r;
        } else {
          l = i;
          if (e[i] == 0.0) {
            H(i, n) = (w != 0.0) ? -r / w : -r / (eps * norm);
          } else {
            // Solve the 2x2 real block.
            x = H(i, i + 1);
            y = H(i + 1, i);
            q = (d[i] - p) * (d[i] - p) + e[i] * e[i];
            t = (x * s - z * r) / q;
            H(i, n) = t;
            H(i + 1, n) = (std::abs(x) > std::abs(z)) ? (-r - w * t) / x
                                                      : (-s - y * t) / z;
          }
          // Overflow control.
          t = std::abs(H(i, n));
          if ((eps * t) * t > 1) {
            for (Index j = i; j <= n; ++j) H(j, n) /= t;
          }
        }
      }
    } else if (q < 0.0) {
      // Complex eigenvector (stored in columns n-1 and n as Re / Im).
      Index l = n - 1;
      if (std::abs(H(n, n - 1)) > std::abs(H(n - 1, n))) {
        H(n - 1, n - 1) = q / H(n, n - 1);
        H(n - 1, n) = -(H(n, n) - p) / H(n, n - 1);
      } else {
        double cr, ci;
        detail::complex_div(0.0, -H(n - 1, n), H(n - 1, n - 1) - p, q, cr, ci);
        H(n - 1, n - 1) = cr;
        H(n - 1, n) = ci;
      }
      H(n, n - 1) = 0.0;
      H(n, n) = 1.0;
      for (Index i = n - 2; i >= 0; --i) {
        double ra = 0.0;
        double sa = 0.0;
        for (Index j = l; j <= n; ++j) {
          ra += H(i, j) * H(j, n - 1);
          sa += H(i, j) * H(j, n);
        }
        w = H(i, i) - p;

        if (e[i] < 0.0) {
          z = w;
          r = ra;
          s = sa;
        } else {
          l = i;
          if (e[i] == 0.0) {
            double cr, ci;
            detail::complex_div(-ra, -sa, w, q, cr, ci);
            H(i, n - 1) = cr;
            H(i, n) = ci;
          } else {
            x = H(i, i + 1);
            y = H(i + 1, i);
            double vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
            double vi = (d[i] - p) * 2.0 * q;
            if (vr == 0.0 && vi == 0.0) {
              vr = eps * norm *
                   (std::abs(w) + std::abs(q) + std::abs(x) + std::abs(y) +
                    std::abs(z));
            }
            double cr, ci;
            detail::complex_div(x * r - z * ra + q * sa,
                                x * s - z * sa - q * ra, vr, vi, cr, ci);
            H(i, n - 1) = cr;
            H(i, n) = ci;
            if (std::abs(x) > std::abs(z) + std::abs(q)) {
              H(i + 1, n - 1) = (-ra - w * H(i, n - 1) + q * H(i, n)) / x;
              H(i + 1, n) = (-sa - w * H(i, n) - q * H(i, n - 1)) / x;
            } else {
              detail::complex_div(-r - y * H(i, n - 1), -s - y * H(i, n), z, q,
                                  cr, ci);
              H(i + 1, n - 1) = cr;
              H(i + 1, n) = ci;
            }
          }
          t = std::max(std::abs(H(i, n - 1)), std::abs(H(i, n)));
          if ((eps * t) * t > 1) {
            for (Index j = i; j <= n; ++j) {
              H(j, n - 1) /= t;
              H(j, n) /= t;
            }
          }
        }
      }
    }
  }

  // Back-transform to eigenvectors of the original matrix.
  for (Index j = nn - 1; j >= low; --j) {
    for (Index i = low; i <= high; ++i) {
      z = 0.0;
      for (Index k = low; k <= std::min(j, high); ++k) z += V(i, k) * H(k, j);
      V(i, j) = z;
    }
  }

  // Assemble complex eigenpairs: a conjugate pair occupies two adjacent
  // columns holding the real and imaginary parts of one eigenvector.
  EigenResult res;
  res.values.resize(nn);
  res.vectors.resize(nn, nn);
  for (Index i = 0; i < nn; ++i) {
    res.values[i] = Complex(d[i], e[i]);
    if (e[i] > 0.0) {
      res.vectors.col(i) = V.col(i).cast<Complex>() +
                           Complex(0.0, 1.0) * V.col(i + 1).cast<Complex>();
    } else if (e[i] < 0.0) {
      res.vectors.col(i) = V.col(i - 1).cast<Complex>() -
                           Complex(0.0, 1.0) * V.col(i).cast<Complex>();
    } else {
      res.vectors.col(i) = V.col(i).cast<Complex>();
    }
  }
  return res;
}

}  // namespace evop
