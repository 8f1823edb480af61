//! Tour of the smoothing families that turn binary spins into continuous
//! variables: their shapes, how β sharpens them, and the per-unit energy
//! coefficients they contribute to the augmented Boltzmann machine.
//!
//! Run with: cargo run --example smoothing_zoo

use bmrelax::smoothing::SmoothingKind;

fn main() {
    // Each family defines a conditional density r(ζ|z) per binary state z.
    // The relaxation replaces z with ζ; β controls how tightly ζ hugs z.
    let zoo = [
        SmoothingKind::Exponential { beta: 10.0 },
        SmoothingKind::UniformExp {
            beta: 10.0,
            epsilon: 0.05,
        },
        SmoothingKind::PowerFunction { beta: 10.0 },
        SmoothingKind::Gaussian { beta: 10.0 },
        SmoothingKind::ShiftedGaussian {
            beta: 10.0,
            delta_mu: 0.2,
        },
    ];

    println!("family         support   symmetric  r(0.25|0)  r(0.25|1)  F(0.25|0)");
    for kind in zoo {
        println!(
            "{:<13}  {:<8}  {:<9}  {:>9.4}  {:>9.4}  {:>9.4}",
            kind.name(),
            if kind.unit_support() { "[0,1]" } else { "R" },
            kind.symmetric(),
            kind.pdf(0.25, false),
            kind.pdf(0.25, true),
            kind.cdf(0.25, false),
        );
    }

    // Sharpening: raising β concentrates r(ζ|0) near 0. The mean of ζ|z=0
    // shrinks roughly like 1/β for the exponential family and 1/(1+β) for
    // the power family.
    println!("\nmean of ζ given z=0 (midpoint rule over the unit interval):");
    println!("  β      exponential   power-function");
    for beta in [4.0, 8.0, 16.0, 32.0, 64.0] {
        let exp = SmoothingKind::Exponential { beta };
        let pow = SmoothingKind::PowerFunction { beta };
        let grid = 200_000;
        let mean_of = |k: &SmoothingKind| -> f64 {
            (0..grid)
                .map(|i| {
                    let z = (i as f64 + 0.5) / grid as f64;
                    z * k.pdf(z, false) / grid as f64
                })
                .sum()
        };
        println!("  {beta:<5} {:>12.4}  {:>14.4}", mean_of(&exp), mean_of(&pow));
    }

    // The augmented machine: conditioning the joint on ζ shifts each unit's
    // bias by b(ζᵢ) = log r(ζᵢ|1) − log r(ζᵢ|0) and adds a constant c(ζᵢ)
    // = log r(ζᵢ|0), so p(z|ζ) is again a Boltzmann machine.
    let kind = SmoothingKind::PowerFunction { beta: 30.0 };
    println!("\naugmented-energy coefficients under {} β=30:", kind.name());
    println!("  ζ       bias shift b(ζ)   constant c(ζ)");
    for zeta in [0.05, 0.25, 0.5, 0.75, 0.95] {
        let (b, c) = kind.coefficient_pair(zeta);
        println!("  {zeta:<6} {b:>15.4}  {c:>14.4}");
    }
    println!(
        "\nA ζ near 1 pushes its unit's effective bias up (the machine is told\n\
         \"this unit looked on\"), a ζ near 0 pushes it down; at the β=30\n\
         sharpness the shift swings ±{:.0} nats across the interval.",
        kind.coefficient_pair(0.95).0
    );

    // Mixture view used by the posterior: with mixing weight q = q(z=1), the
    // marginal density of ζ is (1−q)·r(ζ|0) + q·r(ζ|1).
    let q = 0.3;
    println!("\nmixture density at q = {q} for {} β=30:", kind.name());
    for zeta in [0.02, 0.3, 0.7, 0.98] {
        println!(
            "  ζ={zeta:<5} pdf {:>10.4}   cdf {:>7.4}",
            kind.mixture_pdf(q, zeta),
            kind.mixture_cdf(q, zeta)
        );
    }
    // Mass splits (1−q)/q between the corners as β grows.
    println!(
        "  mass below 1/2: {:.4} (→ 1−q = {:.1} as β → ∞)",
        kind.mixture_cdf(q, 0.5),
        1.0 - q
    );
}
