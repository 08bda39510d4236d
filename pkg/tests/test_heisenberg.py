import numpy as np
import pytest

from spinsearch import (
    Hamiltonian,
    HeisenbergSpec,
    PauliString,
    basis_state,
    build_heisenberg,
    commutes_with_exchange,
    critical_field_scan,
    dense_matrix,
    exact_ground_energy,
    exchange_hamiltonian,
    expectation,
    first_departure,
    total_sz,
)


class TestSpec:
    def test_rejects_short_chain(self):
        with pytest.raises(ValueError, match="N"):
            HeisenbergSpec(1.0, 1.0, 1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="J"):
            HeisenbergSpec(float("nan"), 1.0, 4)


class TestBuildHeisenberg:
    def test_reference_case(self, ham_10_10_4):
        assert len(ham_10_10_4) == 13
        energy, _ = exact_ground_energy(ham_10_10_4)
        assert energy == pytest.approx(-64.641, abs=1e-3)

    @pytest.mark.parametrize("N", [2, 3, 4, 5, 6])
    def test_term_count_formula(self, N):
        h = build_heisenberg(HeisenbergSpec(2.0, 3.0, N))
        assert len(h) == 4 * N - 3

    def test_open_boundary(self):
        h = build_heisenberg(HeisenbergSpec(1.0, 1.0, 5))
        for _, pauli in h.terms:
            qubits = sorted(pauli.factors)
            if len(qubits) == 2:
                assert qubits[1] - qubits[0] == 1  # no (0, N-1) wrap term

    def test_field_only(self):
        h = build_heisenberg(HeisenbergSpec(0.0, 1.0, 4))
        assert len(h) == 13
        assert sum(1 for c, _ in h.terms if c != 0.0) == 4
        energy, _ = exact_ground_energy(h)
        assert energy == pytest.approx(-4.0, abs=1e-12)

    def test_two_site_singlet(self):
        h = build_heisenberg(HeisenbergSpec(1.0, 0.0, 2))
        assert len(h.terms) == 5  # 3 exchange + 2 field terms (fields zero here)
        assert sum(1 for c, _ in h.terms if c != 0.0) == 3
        energy, _ = exact_ground_energy(h)
        assert energy == pytest.approx(-3.0, abs=1e-12)


class TestTotalSz:
    def test_all_up(self):
        assert expectation(basis_state("0000"), total_sz(4)) == pytest.approx(2.0)

    def test_half_filled(self):
        assert expectation(basis_state("0011"), total_sz(4)) == pytest.approx(0.0)

    def test_singlet(self):
        singlet = (basis_state("01") - basis_state("10")) / np.sqrt(2)
        assert expectation(singlet, total_sz(2)) == pytest.approx(0.0, abs=1e-12)


class TestCommutation:
    def test_heisenberg_commutes(self):
        assert commutes_with_exchange(HeisenbergSpec(10.0, 10.0, 4))
        assert commutes_with_exchange(HeisenbergSpec(1.0, 0.0, 2))

    def test_tampered_anisotropic_does_not_commute(self):
        # replace the first XX coefficient by 2J
        J, N = 1.0, 4
        terms = list(exchange_hamiltonian(N, J).terms)
        coeff, pauli = terms[0]
        assert sorted(pauli.factors.values()) == ["X", "X"]
        terms[0] = (2 * J, pauli)
        tampered = dense_matrix(Hamiltonian(terms, N))
        sz = dense_matrix(total_sz(N))
        commutator = tampered @ sz - sz @ tampered
        assert np.max(np.abs(commutator)) > 1e-6


class TestCriticalFieldScan:
    def test_symmetry_protected_region(self):
        rows = critical_field_scan(10.0, 4, [0.1, 1.0, 10.0])
        assert rows[0][1] == pytest.approx(-64.641, abs=1e-3)
        assert rows[1][1] == pytest.approx(rows[0][1], abs=1e-9 * abs(rows[0][1]))
        assert rows[2][1] < rows[0][1]  # beyond the crossing

    def test_pure_field_scaling(self):
        rows = critical_field_scan(0.0, 4, [1.0, 2.0])
        assert rows[0][1] == pytest.approx(-4.0, abs=1e-12)
        assert rows[1][1] == pytest.approx(-8.0, abs=1e-12)

    def test_measured_crossing_near_1p3J(self):
        # Measured on a 0.01-spaced grid: the ground level leaves the
        # singlet value between h = 1.31 and h = 1.32 (sector argument
        # gives h_c = 1.31784 exactly at J=1, N=4).
        grid = [round(0.01 * k, 10) for k in range(0, 201)]
        rows = critical_field_scan(1.0, 4, grid)
        reference, _ = exact_ground_energy(build_heisenberg(HeisenbergSpec(1.0, 0.0, 4)))
        crossing = first_departure(rows, reference)
        assert crossing == pytest.approx(1.32, abs=1e-9)

    def test_rejects_odd_or_negative(self):
        with pytest.raises(ValueError):
            critical_field_scan(1.0, 3, [0.1])
        with pytest.raises(ValueError):
            critical_field_scan(1.0, 4, [-0.1])


class TestGroundStateProperties:
    @pytest.mark.parametrize("N", [2, 4, 6])
    def test_even_chain_protection(self, N):
        base, _ = exact_ground_energy(build_heisenberg(HeisenbergSpec(1.0, 0.0, N)))
        for h in (0.1, 0.5, 1.0):
            energy, _ = exact_ground_energy(build_heisenberg(HeisenbergSpec(1.0, h, N)))
            assert abs(energy - base) <= 1e-9 * abs(base)

    def test_monotone_in_field(self):
        energies = [e for _, e in critical_field_scan(1.0, 4, np.linspace(0, 4, 21))]
        assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))

    @pytest.mark.parametrize("N", [2, 4, 6])
    def test_commutator_property_even_chains(self, N):
        assert commutes_with_exchange(HeisenbergSpec(1.0, 0.7, N))
