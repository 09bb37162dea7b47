//! Reference parameter sets used by the examples, the CLI defaults and the
//! test suites.

use crate::binary::OrbitalSolution;
use crate::wind::WindLawParams;

/// Extended, optically thick early-O wind in a CIV-like doublet.
pub fn thick_wind() -> WindLawParams {
    WindLawParams {
        w0: 0.01,
        beta: 1.0,
        w_gauss: 0.05,
        w1: 1.0,
        alpha1: 0.5,
        alpha2: 1.0,
        t_tot_blue: 3.0,
        t_tot_red: 1.5,
        a_phot_blue: 0.0,
        a_phot_red: 0.0,
        w_phot_blue: 0.05,
        w_phot_red: 0.05,
        v_inf: 2500.0,
        epsilon: 0.0,
    }
}

/// Line formation confined to a shell about 0.1 stellar radii thick.
pub fn thin_shell() -> WindLawParams {
    WindLawParams {
        w0: 0.01,
        beta: 1.0,
        w_gauss: 0.1,
        // radius_at_speed(0.1) = 1.1
        w1: 0.1,
        alpha1: 0.0,
        alpha2: 1.0,
        t_tot_blue: 0.5,
        t_tot_red: 0.25,
        a_phot_blue: 0.0,
        a_phot_red: 0.0,
        w_phot_blue: 0.05,
        w_phot_red: 0.05,
        v_inf: 2500.0,
        epsilon: 0.0,
    }
}

/// No wind opacity and no photospheric lines.
pub fn transparent() -> WindLawParams {
    WindLawParams { t_tot_blue: 0.0, t_tot_red: 0.0, ..thick_wind() }
}

/// Circular O+O orbit with a 0.6/0.4 UV light ratio. The element values are
/// placeholders of plausible magnitude, not a published solution.
pub fn placeholder_orbit() -> OrbitalSolution {
    OrbitalSolution {
        period_days: 3.367,
        t0: 2_448_000.0,
        eccentricity: 0.0,
        omega_deg: 90.0,
        k1_kms: 190.0,
        k2_kms: 210.0,
        gamma_kms: 0.0,
        l1: 0.6,
        l2: 0.4,
    }
}
