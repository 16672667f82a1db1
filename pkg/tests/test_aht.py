import math

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import random_hermitian
from ddsym.aht import (
    DegenerateWindowError,
    TogglingSegment,
    average_hamiltonian,
    bch_truncated,
    closed_form_reference,
    error_decompose,
    graded_log_oracle,
    ideal_frame,
    log_average_hamiltonian,
    pauli_expansion,
    toggling_frame,
    toggling_time_symmetric,
)
from ddsym.model import HamiltonianSpec, build_hamiltonian
from ddsym.opcore import embed_spin_op, frob, is_hermitian, principal_log
from ddsym.seq import X, Y, Delay, PulseSequence, build_cdd, build_cpmg, build_xy4, build_xy8, build_xy16
from ddsym.sim import cycle_propagator, pulse_unitary


def parts_for(K=2, eps=0.0, model="secular_dipolar", seed=3, scale=1.0):
    return build_hamiltonian(HamiltonianSpec.random(K, scale, scale / 2, seed, bath_model=model, epsilon=eps))


class TestErrorDecompose:
    def test_no_error(self):
        pre, ideal, post = error_decompose(X, 0.0, 0.1)
        assert frob(pre) == 0 and frob(post) == 0
        np.testing.assert_allclose(ideal, expm(-1j * math.pi * embed_spin_op(0, "x", 1)), atol=1e-15)

    def test_half_weight(self):
        pre, _, post = error_decompose(X, 0.1, 0.37)
        np.testing.assert_allclose(pre, 0.05 * math.pi * embed_spin_op(0, "x", 1), atol=1e-16)
        np.testing.assert_array_equal(pre, post)

    @pytest.mark.parametrize("phase", [0.0, math.pi / 2, 1.1, 4.0])
    @pytest.mark.parametrize("eps", [-0.08, 0.03, 0.1])
    def test_product_is_imperfect_pulse(self, phase, eps):
        from ddsym.seq import Pulse

        pre, ideal, post = error_decompose(Pulse(phase), eps, 0.5)
        R = expm(-1j * post) @ ideal @ expm(-1j * pre)
        assert np.abs(R - pulse_unitary(phase, eps)).max() < 1e-12

    def test_delay_rejected(self):
        with pytest.raises(ValueError):
            error_decompose(Delay(1.0), 0.1, 0.1)


class TestTogglingFrame:
    def signs(self, segments, parts):
        out = []
        for seg in segments:
            Ht = seg.H_tilde
            for sign in (1, -1):
                if frob(Ht - (parts.H_E + sign * parts.H_SE)) < 1e-12:
                    out.append(sign)
                    break
            else:
                out.append(None)
        return out

    def test_symmetric_xy4_pattern(self):
        parts = parts_for()
        segs = toggling_frame(build_xy4(2.0, True), parts, 0.0)
        assert [s.duration for s in segs] == [1.0, 2.0, 2.0, 2.0, 1.0]
        assert self.signs(segs, parts) == [1, -1, 1, -1, 1]

    def test_asymmetric_xy4_pattern(self):
        parts = parts_for()
        segs = toggling_frame(build_xy4(2.0, False), parts, 0.0)
        assert [s.duration for s in segs] == [2.0] * 4
        assert self.signs(segs, parts) == [1, -1, 1, -1]

    def test_single_delay(self):
        parts = parts_for()
        (seg,) = toggling_frame(PulseSequence((Delay(0.7),)), parts, 0.0)
        assert seg.duration == 0.7
        np.testing.assert_allclose(seg.H_tilde, parts.H_total, atol=1e-15)

    @pytest.mark.parametrize("build", [build_xy4, build_xy8, build_xy16])
    @pytest.mark.parametrize("sym", [True, False])
    def test_product_reproduces_exact_propagator(self, build, sym):
        # with error kicks the toggling product is exact, not an approximation
        parts = parts_for(eps=0.07)
        s = build(0.4, sym)
        U = np.eye(parts.dim, dtype=complex)
        for seg in toggling_frame(s, parts):
            U = expm(-1j * seg.weight) @ U
        exact = cycle_propagator(s, parts)
        assert frob(ideal_frame(s, parts.n_sites) @ U - exact) < 1e-12

    def test_kicks_have_no_rate(self):
        parts = parts_for(eps=0.05)
        kicks = [s for s in toggling_frame(build_xy4(1.0, False), parts) if s.is_kick]
        assert len(kicks) == 4
        with pytest.raises(ValueError):
            kicks[0].H_tilde

    def test_absorbed_zero_window_is_degenerate(self):
        parts = parts_for(eps=0.05)
        with pytest.raises(DegenerateWindowError):
            toggling_frame(build_xy8(1.0, False), parts, absorb=True)
        # the kick form has no such restriction
        toggling_frame(build_xy8(1.0, False), parts)

    def test_absorbed_windows_without_error(self):
        parts = parts_for()
        segs = toggling_frame(build_xy8(1.0, False), parts, 0.0, absorb=True)
        assert [s.duration for s in segs] == [1.0] * 8

    def test_empty_sequence(self):
        with pytest.raises(ValueError):
            toggling_frame(PulseSequence(()), parts_for())


class TestBCH:
    def test_commuting(self):
        A = -1j * embed_spin_op(0, "z", 2)
        B = -0.3j * embed_spin_op(1, "z", 2)
        np.testing.assert_allclose(bch_truncated(A, B), A + B, atol=1e-16)

    def test_order_one(self, rng):
        A, B = (-1j * random_hermitian(rng, 4) for _ in range(2))
        np.testing.assert_array_equal(bch_truncated(A, B, order=1), A + B)

    def test_unsupported_order(self, rng):
        A = -1j * random_hermitian(rng, 2)
        with pytest.raises(ValueError):
            bch_truncated(A, A, order=4)

    def test_fourth_order_residual(self, rng):
        A0, B0 = (-1j * random_hermitian(rng, 8) for _ in range(2))
        A0, B0 = A0 / np.linalg.norm(A0, 2), B0 / np.linalg.norm(B0, 2)
        norms = [1e-2, 5e-3, 2.5e-3]
        res = []
        for r in norms:
            A, B = r * A0, r * B0
            res.append(frob(bch_truncated(A, B) - principal_log(expm(A) @ expm(B))))
        slope = np.polyfit(np.log(norms), np.log(res), 1)[0]
        assert 3.7 < slope < 4.3


class TestAverageHamiltonian:
    @pytest.mark.parametrize("sym", [True, False])
    def test_zeroth_order_is_bath(self, sym):
        parts = parts_for()
        ah = average_hamiltonian(build_xy4(0.5, sym), parts, 0.0)
        assert frob(ah[0] - parts.H_E) < 1e-13

    def test_zeroth_order_is_segment_mean(self):
        parts = parts_for(K=3)
        s = build_cdd(2, 0.3, True)
        segs = toggling_frame(s, parts, 0.0)
        mean = sum(seg.weight for seg in segs) / s.cycle_time
        assert frob(average_hamiltonian(s, parts, 0.0)[0] - mean) < 1e-14

    def test_symmetric_xy4_first_order_vanishes(self):
        parts = parts_for(K=3)
        ah = average_hamiltonian(build_xy4(0.5, True), parts, 0.0)
        assert frob(ah[1]) <= 1e-12 * frob(ah[0])

    @pytest.mark.parametrize("sym", [True, False])
    def test_xy8_first_order_vanishes_with_errors(self, sym):
        parts = parts_for(K=3, eps=0.08)
        ah = average_hamiltonian(build_xy8(0.5, sym), parts)
        assert frob(ah[1]) < 1e-13

    def test_terms_hermitian(self):
        parts = parts_for(K=3, eps=0.05)
        ah = average_hamiltonian(build_xy16(0.3, False), parts)
        assert all(is_hermitian(t, 1e-11) for t in ah.terms)
        assert ah.truncation_order == 2 and len(ah.terms) == 3

    @pytest.mark.parametrize("sym", [True, False])
    def test_power_law_in_cycle_time(self, sym):
        parts = parts_for(K=2)
        a = average_hamiltonian(build_xy4(0.2, sym), parts, 0.0)
        b = average_hamiltonian(build_xy4(0.4, sym), parts, 0.0)
        for n in range(3):
            assert frob(b[n] - 2**n * a[n]) <= 1e-11 * max(1.0, frob(b[n]))

    @pytest.mark.parametrize(
        "s",
        [build_xy4(0.2, True), build_xy4(0.2, False), build_xy8(0.2, False), build_cdd(2, 0.05, True)],
        ids=lambda s: s.label,
    )
    def test_matches_graded_log_oracle(self, s):
        parts = parts_for(K=2, eps=0.04)
        ah = average_hamiltonian(s, parts)
        oracle = graded_log_oracle(s, parts)
        for n in range(3):
            assert frob(ah[n] - oracle[n]) <= 1e-7 * max(frob(oracle[n]), 1e-6)

    def test_truncation_tracks_log(self):
        parts = parts_for(K=2)
        s = build_xy4(0.05, False)
        exact = log_average_hamiltonian(s, parts, 0.0)
        ah = average_hamiltonian(s, parts, 0.0)
        first = frob(exact - ah[0] - ah[1])
        assert frob(exact - ah.total) < 0.1 * first

    def test_rejects_large_order(self):
        with pytest.raises(ValueError):
            average_hamiltonian(build_xy4(1.0), parts_for(), max_order=3)

    def test_report_lists_pauli_strings(self):
        parts = build_hamiltonian(HamiltonianSpec(n_bath=1, b=(2.0,), bath_model="none"))
        text = average_hamiltonian(PulseSequence((Delay(1.0),)), parts, 0.0).report()
        assert "+0.5 ZZ" in text
        assert "H2" in text


class TestPauliExpansion:
    def test_single_terms(self):
        assert pauli_expansion(embed_spin_op(0, "z", 2), 2)["ZI"] == pytest.approx(0.5)
        coeffs = pauli_expansion(embed_spin_op(1, "x", 3), 3)
        assert coeffs["IXI"] == pytest.approx(0.5)
        assert sum(abs(v) for v in coeffs.values()) == pytest.approx(0.5)

    def test_reconstruction(self, rng):
        from functools import reduce

        from ddsym.opcore import PAULI

        P = {"I": np.eye(2), "X": PAULI["x"], "Y": PAULI["y"], "Z": PAULI["z"]}
        A = random_hermitian(rng, 8)
        back = sum(c * reduce(np.kron, [P[ch] for ch in lab]) for lab, c in pauli_expansion(A, 3).items())
        assert frob(back - A) < 1e-12


class TestClosedForms:
    def test_h0_is_bath(self):
        parts = parts_for()
        np.testing.assert_array_equal(closed_form_reference("h0", parts, 0.05, 1.0), parts.H_E)

    def test_symmetric_first_order_at_zero_error(self):
        parts = parts_for(K=3)
        assert frob(closed_form_reference("xy4_sym_h1", parts, 0.0, 1.0)) == 0

    def test_asymmetric_structure_with_commuting_bath(self):
        parts = parts_for(K=3, model="diagonal")
        eps, tau = 0.07, 1.3
        sym = closed_form_reference("xy4_sym_h1", parts, eps, tau)
        asym = closed_form_reference("xy4_asym_h1", parts, eps, tau)
        Sx, Sy = parts.S("x"), parts.S("y")
        shift = sum(
            parts.spec.b[k] * eps * math.pi / 32 * (Sx + Sy - 2 * Sx) @ parts.I(k, "z") for k in range(3)
        )
        assert frob(asym - (sym + shift)) < 1e-14

    def test_xy8_noHE_variant_difference(self):
        parts = parts_for(K=3, model="none")
        eps, tau = 0.05, 0.8
        diff = closed_form_reference("xy8_h2_noHE", parts, eps, tau, "A") - closed_form_reference(
            "xy8_h2_noHE", parts, eps, tau, "S"
        )
        expect = sum(eps * b**2 * tau / 368 for b in parts.spec.b) * parts.S("y")
        assert frob(diff - expect) < 1e-15

    @pytest.mark.parametrize("variant,sym", [("S", True), ("A", False)])
    def test_ideal_pulse_xy8_second_order_matches_engine(self, variant, sym):
        parts = parts_for(K=3, seed=5)
        tau = 0.3
        ref = closed_form_reference("xy8_h2_idealpulses", parts, 0.0, tau, variant)
        ah = average_hamiltonian(build_xy8(tau, sym), parts, 0.0)
        assert frob(ah[2] - ref) <= 1e-10 * frob(ref)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            closed_form_reference("xy8_h2_noHE", parts_for(), 0.05, 1.0)
        with pytest.raises(ValueError):
            closed_form_reference("xy8_h2_idealpulses", parts_for(), 0.05, 1.0)
        with pytest.raises(ValueError):
            closed_form_reference("kdd", parts_for(), 0.0, 1.0)

    def test_absorbed_form_matches_printed_cross_terms(self):
        # merging error halves into windows reproduces the S_x I_z / S_y I_z terms
        # of the printed symmetric first-order formula, but not its S_z part
        eps, tau = 0.04, 0.2
        parts = parts_for(K=2, eps=eps)
        got = pauli_expansion(average_hamiltonian(build_xy4(tau, True), parts, absorb=True)[1], 3)
        ref = pauli_expansion(closed_form_reference("xy4_sym_h1", parts, eps, tau), 3)
        for label in ("XIZ", "XZI", "YIZ", "YZI"):
            assert got[label] == pytest.approx(ref[label], rel=1e-9)
        assert got["ZII"] == pytest.approx(ref["ZII"] / 2, rel=1e-9)

    def test_exact_error_rotation_coefficient(self):
        # exact first-order S_z rate of XY-4 is eps^2 pi^2 / (4 tau)
        eps, tau = 0.04, 0.2
        parts = build_hamiltonian(HamiltonianSpec(n_bath=0, epsilon=eps))
        for sym in (True, False):
            H1 = average_hamiltonian(build_xy4(tau, sym), parts)[1]
            np.testing.assert_allclose(H1, eps**2 * math.pi**2 / (4 * tau) * parts.S("z"), atol=1e-14)


class TestTimeSymmetry:
    @pytest.mark.parametrize(
        "s,expected",
        [
            (build_xy4(1.0, True), True),
            (build_xy4(1.0, False), False),
            (build_xy8(1.0, False), True),
            (build_xy8(1.0, True), True),
            (build_xy16(1.0, True), True),
            (build_cdd(2, 1.0, True), True),
            (build_cpmg(4, 1.0, True), True),
            (build_cpmg(4, 1.0, False), False),
        ],
        ids=lambda v: getattr(v, "label", str(v)),
    )
    def test_ideal_pulses(self, s, expected):
        assert toggling_time_symmetric(s, parts_for(K=2), 0.0) is expected

    def test_error_kicks_break_xy4_symmetry(self):
        assert not toggling_time_symmetric(build_xy4(1.0, True), parts_for(K=2), 0.05)

    def test_xy8_stays_symmetric_with_errors(self):
        parts = parts_for(K=2)
        assert toggling_time_symmetric(build_xy8(1.0, True), parts, 0.05)
        assert toggling_time_symmetric(build_xy8(1.0, False), parts, 0.05)

    def test_segment_is_frozen(self):
        seg = TogglingSegment(np.eye(2), 1.0)
        with pytest.raises(AttributeError):
            seg.duration = 2.0
