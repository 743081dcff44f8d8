#pragma once
#include <cstddef>
#include <vector>

#include "riskcast/ssm.hpp"
#include "riskcast/tape.hpp"
#include "riskcast/tensor.hpp"

// Self-supervised objectives.
//
// Spatial branch: fuse original and augmented region embeddings with
// learned gate vectors, push the fusion through a linear autoencoder, and
// score reconstruction plus a spectral k-means surrogate
//   L_km = Tr(Dlat^T Dlat) - Tr(F^T (Dlat^T Dlat) F),
// where F holds the top-k eigenvectors of the N x N Gram matrix and is a
// constant between refreshes (stop-gradient).
//
// Temporal branch: bilinear scores between original and augmented slot
// embeddings of the same region, InfoNCE with the matching slot as the
// positive and the remaining slots of the window as negatives.
namespace riskcast {

// v_n = w1 (*) m_n + w2 (*) mt_n. Rows are regions, w1/w2 length-D gates.
ad::Var fuse_embeddings(ad::Var m, ad::Var mt, ad::Var w1, ad::Var w2);

// Linear autoencoder. v: N x D, w_enc: D x d_lat, w_dec: d_lat x D.
// dlat is the encoding stored column-per-region (d_lat x N).
struct AutoencodeOut {
  ad::Var dlat;    // d_lat x N
  ad::Var vprime;  // N x D
};
AutoencodeOut autoencode(ad::Var v, ad::Var w_enc, ad::Var b_enc, ad::Var w_dec,
                         ad::Var b_dec);

// (1/N) sum_n ||v_n - v'_n||^2.
ad::Var reconstruction_loss(ad::Var v, ad::Var vprime);

// Deterministic cyclic Jacobi eigensolver for symmetric matrices.
// Eigenvalues sorted descending; ties keep the lower original column
// first. Each eigenvector's largest-magnitude entry is made positive
// (first such entry on magnitude ties).
struct EigResult {
  std::vector<double> values;  // descending
  Tensor vectors;              // columns are eigenvectors, same order
};
EigResult jacobi_eigen(const Tensor& sym);

// Gram = dlat^T dlat (N x N), built symmetric.
Tensor gram_of(const Tensor& dlat);

// F = top-k eigenvectors (N x k) of a symmetric PSD Gram matrix.
Tensor indicator_from_gram(const Tensor& gram, std::size_t k);

// F = top-k eigenvectors (N x k) of Gram = dlat^T dlat, dlat: d_lat x N.
Tensor update_cluster_indicator(const Tensor& dlat, std::size_t k);

// Tr(Dlat^T Dlat) - Tr(F^T Dlat^T Dlat F) with F constant. Scalar node.
ad::Var kmeans_loss(ad::Var dlat, const Tensor& f);

// zpos[t,n] = m[t,n]^T Wb mt[t,n]; zneg[t,t',n] = m[t,n]^T Wb mt[t',n].
// m, mt: T x N x D. zneg's diagonal t'==t duplicates zpos.
struct BilinearScores {
  Tensor zpos;  // T x N
  Tensor zneg;  // T x T x N
};
BilinearScores bilinear_scores(const Tensor& m, const Tensor& mt, const Tensor& wb);

// InfoNCE over one window: l(t,n) uses zpos as the positive and the
// off-diagonal zneg entries as negatives; mean over regions n, then over
// anchor slots t. Requires T >= 2 (at least one negative).
double temporal_contrastive_loss(const Tensor& zpos, const Tensor& zneg, double tau);

// Tape path over batched sequences (SeqMeta row layout). p = matmul(mseq,
// wb) is built by the caller; scores holds the full pair grid, flat index
// ((w*T + t)*T + t') * N + n, whose diagonal t'==t is the positive.
ad::Var pair_scores(ad::Var p, ad::Var mtseq, SeqMeta meta);
ad::Var info_nce(ad::Var scores, SeqMeta meta, double tau);

}  // namespace riskcast
