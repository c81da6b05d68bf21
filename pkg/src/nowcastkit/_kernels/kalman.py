"""Linear-Gaussian state-space kernels with missing observations.

Model, for t = 0..T-1:

    s_t = A s_{t-1} + c_t + w_t,   w_t ~ N(0, Q),   s_0 ~ N(m0, P0)
    y_t = H s_t + d_t + e_t,       e_t ~ N(0, R)

``Y`` is (T, n) with NaN marking unobserved entries; any subset of rows may
be missing at each step.  ``c`` is (T, s) and ``d`` is (T, n); ``c[0]`` is
unused because (m0, P0) already describe the time-0 prior.  ``R`` is a full
(n, n) covariance; rows/columns are subset to the observed entries.
"""
from __future__ import annotations

import numpy as np

from ._backend import jit


@jit
def kalman_filter(Y, A, Q, H, R, c, d, m0, P0):
    """Forward pass.  Returns (loglik, m_pred, P_pred, m_filt, P_filt)."""
    T, n = Y.shape
    s = A.shape[0]
    m_pred = np.zeros((T, s))
    P_pred = np.zeros((T, s, s))
    m_filt = np.zeros((T, s))
    P_filt = np.zeros((T, s, s))
    eye = np.eye(s)
    loglik = 0.0
    log2pi = 1.8378770664093453

    m_pred[0] = m0
    P_pred[0] = P0
    for t in range(T):
        mp = m_pred[t]
        Pp = P_pred[t]
        # observed rows at this step
        k = 0
        for i in range(n):
            if not np.isnan(Y[t, i]):
                k += 1
        if k == 0:
            m_filt[t] = mp
            P_filt[t] = Pp
        else:
            obs = np.empty(k, dtype=np.int64)
            j = 0
            for i in range(n):
                if not np.isnan(Y[t, i]):
                    obs[j] = i
                    j += 1
            Ho = np.empty((k, s))
            Ro = np.empty((k, k))
            v = np.empty(k)
            for a in range(k):
                ia = obs[a]
                for b in range(s):
                    Ho[a, b] = H[ia, b]
                for b in range(k):
                    Ro[a, b] = R[ia, obs[b]]
                v[a] = Y[t, ia] - d[t, ia]
            v -= Ho @ mp
            PHt = Pp @ Ho.T
            S = Ho @ PHt + Ro
            S = 0.5 * (S + S.T)
            L = np.linalg.cholesky(S)
            logdet = 0.0
            for a in range(k):
                logdet += np.log(L[a, a])
            logdet *= 2.0
            Sinv_v = np.linalg.solve(S, v)
            K = np.linalg.solve(S, PHt.T).T  # P Ho' S^{-1}
            mf = mp + K @ v
            IKH = eye - K @ Ho
            Pf = IKH @ Pp @ IKH.T + K @ Ro @ K.T
            Pf = 0.5 * (Pf + Pf.T)
            m_filt[t] = mf
            P_filt[t] = Pf
            loglik += -0.5 * (k * log2pi + logdet + v @ Sinv_v)
        if t + 1 < T:
            m_pred[t + 1] = A @ m_filt[t] + c[t + 1]
            Pn = A @ P_filt[t] @ A.T + Q
            P_pred[t + 1] = 0.5 * (Pn + Pn.T)
    return loglik, m_pred, P_pred, m_filt, P_filt


@jit
def rts_smooth(A, m_pred, P_pred, m_filt, P_filt):
    """Rauch-Tung-Striebel backward pass.

    Returns (m_sm, P_sm, P_lag) where P_lag[t] = Cov(s_{t+1}, s_t | Y_{0:T-1})
    for t = 0..T-2, computed as P_sm[t+1] @ J_t' with the usual smoother gain
    J_t = P_filt[t] A' P_pred[t+1]^{-1}.
    """
    T = m_pred.shape[0]
    s = A.shape[0]
    m_sm = np.zeros((T, s))
    P_sm = np.zeros((T, s, s))
    nlag = T - 1 if T > 1 else 0
    P_lag = np.zeros((nlag, s, s))
    m_sm[T - 1] = m_filt[T - 1]
    P_sm[T - 1] = P_filt[T - 1]
    for t in range(T - 2, -1, -1):
        # J' = P_pred[t+1]^{-1} A P_filt[t]
        Jt = np.linalg.solve(P_pred[t + 1], A @ P_filt[t])
        J = Jt.T
        m_sm[t] = m_filt[t] + J @ (m_sm[t + 1] - m_pred[t + 1])
        Ps = P_filt[t] + J @ (P_sm[t + 1] - P_pred[t + 1]) @ J.T
        P_sm[t] = 0.5 * (Ps + Ps.T)
        P_lag[t] = P_sm[t + 1] @ J.T
    return m_sm, P_sm, P_lag


@jit
def state_smooth_means(Y, A, H, R, c, d, m_pred, P_pred):
    """Smoothed state means via the backward disturbance recursion.

    Never inverts a state covariance, so it tolerates the singular predicted
    covariances that arise with noise-free observation rows.
    """
    T, n = Y.shape
    s = A.shape[0]
    m_sm = np.zeros((T, s))
    r = np.zeros(s)
    for t in range(T - 1, -1, -1):
        k = 0
        for i in range(n):
            if not np.isnan(Y[t, i]):
                k += 1
        Pp = P_pred[t]
        if k == 0:
            r = A.T @ r
        else:
            obs = np.empty(k, dtype=np.int64)
            j = 0
            for i in range(n):
                if not np.isnan(Y[t, i]):
                    obs[j] = i
                    j += 1
            Ho = np.empty((k, s))
            Ro = np.empty((k, k))
            v = np.empty(k)
            for a in range(k):
                ia = obs[a]
                for b in range(s):
                    Ho[a, b] = H[ia, b]
                for b in range(k):
                    Ro[a, b] = R[ia, obs[b]]
                v[a] = Y[t, ia] - d[t, ia]
            v -= Ho @ m_pred[t]
            PHt = Pp @ Ho.T
            S = Ho @ PHt + Ro
            S = 0.5 * (S + S.T)
            Sinv_v = np.linalg.solve(S, v)
            K = A @ (np.linalg.solve(S, PHt.T).T)  # A P Ho' S^{-1}
            L = A - K @ Ho
            r = Ho.T @ Sinv_v + L.T @ r
        m_sm[t] = m_pred[t] + Pp @ r
    return m_sm
