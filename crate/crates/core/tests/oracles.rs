//! Reference values computed with mpmath at 40 digits.
#![allow(clippy::excessive_precision)]

use hardy_core::specfun::bessel_i_scaled;
use hardy_core::specfun::stable::{stable_density, StableDensityParams};
use hardy_core::KernelFamily;

fn close(got: f64, want: f64, tol: f64) {
    assert!(
        ((got - want) / want).abs() <= tol,
        "got {got:e}, want {want:e}"
    );
}

#[test]
fn bessel_kernel_values() {
    let cases = [
        (0.5, 1.0, 0.5, 1.5, 0.23999523376734313),
        (2.0, 0.1, 3.0, 3.2, 0.79035506416272908),
        (3.5, 2.0, 1.0, 4.0, 0.0013238203952554442),
        (0.25, 1e-3, 7.0, 7.01, 8.7004029193423931),
        (1.7, 50.0, 2.0, 9.0, 0.0014049033035649402),
    ];
    for (beta, t, x, y, want) in cases {
        let k = KernelFamily::bessel(beta).unwrap();
        close(k.eval(t, &[x], &[y]).unwrap(), want, 1e-12);
    }
}

#[test]
fn laguerre_kernel_values() {
    let cases = [
        (0.5, 0.5, 1.0, 1.2, 0.17916902398269596),
        (1.0, 0.05, 2.0, 2.1, 0.96317209417765724),
        (0.0, 1.0, 0.3, 0.7, 0.093604712397565071),
        (2.5, 3.0, 1.0, 2.0, 2.9965566778760906e-10),
        (0.5, 1e-3, 4.0, 4.02, 7.9429524775611268),
    ];
    for (alpha, t, x, y, want) in cases {
        let k = KernelFamily::laguerre(alpha).unwrap();
        close(k.eval(t, &[x], &[y]).unwrap(), want, 1e-12);
    }
}

#[test]
fn scaled_bessel_i_values() {
    let cases = [
        (0.0, 0.5, 0.64503527044915007),
        (1.5, 30.0, 0.070408676638156207),
        (0.3, 1e3, 0.012616672408666615),
        (5.0, 2.0, 0.0013297610941881578),
        (0.75, 12.0, 0.11360767981210027),
    ];
    for (tau, z, want) in cases {
        close(bessel_i_scaled(tau, z).unwrap(), want, 1e-13);
    }
}

#[test]
fn stable_density_values() {
    let cases = [
        (0.3, 2.0, 0.054783242263121489),
        (0.7, 1.0, 0.38739501014659244),
        (0.9, 0.8, 2.0541674608368435),
        (0.5, 0.3, 0.74610700529679736),
        (0.2, 5.0, 0.013830812051759978),
    ];
    for (nu, s, want) in cases {
        let p = StableDensityParams::new(nu).unwrap();
        close(stable_density(&p, s).unwrap(), want, 1e-9);
    }
}

#[test]
fn heat_normalization() {
    let k = KernelFamily::euclidean_heat(3);
    // (4 pi)^{-3/2}
    close(
        k.eval(1.0, &[0.0; 3], &[0.0; 3]).unwrap(),
        0.02244839026564582,
        1e-14,
    );
}
