//! Whole-network finite-difference checks at 64-bit precision, one test per
//! architecture and scale so they run in parallel.

mod common;

use common::cases::net_case;
use odvsr::models::ARCHITECTURES;

const TOL: f64 = 1e-4;

macro_rules! net_check {
    ($($test:ident: $name:literal x $scale:literal,)*) => {$(
        #[test]
        fn $test() {
            let err = net_case($name, $scale);
            eprintln!("{} x{}: max relative error {err:.3e}", $name, $scale);
            assert!(err < TOL, "{} x{}: {err:e}", $name, $scale);
        }
    )*};
}

net_check! {
    ffcir_x2: "ffcir" x 2,
    ffcir_x4: "ffcir" x 4,
    cspsr_x2: "cspsr" x 2,
    cspsr_x4: "cspsr" x 4,
    vacv_x2: "vacv" x 2,
    vacv_x4: "vacv" x 4,
    athena_x2: "athena" x 2,
    athena_x4: "athena" x 4,
    fsrcnn_x2: "fsrcnn" x 2,
    fsrcnn_x4: "fsrcnn" x 4,
}

#[test]
fn every_architecture_is_covered() {
    assert_eq!(ARCHITECTURES, ["ffcir", "cspsr", "vacv", "athena", "fsrcnn"]);
}
