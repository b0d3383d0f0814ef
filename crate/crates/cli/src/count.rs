use anyhow::Result;
use clap::Args;
use serde::Serialize;
use set_twister::autodiff::Activation;
use set_twister::setrep::{flop_count, param_count, Architecture, FlopCount, ParamCount, RhoSpec, SetTwisterConfig};

use crate::opts::parse_widths;

/// Model shape to count. Defaults describe a small 3-bank, pairwise model
/// on 10-wide inputs with bias-free layers.
#[derive(Args, Debug, Clone)]
pub struct CountArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub d_in: usize,
    #[arg(long, default_value_t = 4)]
    pub d_rep: usize,
    /// Hidden widths of each φ bank, comma-separated (`-` for none).
    #[arg(long, default_value = "4,4")]
    pub phi_hidden: String,
    /// Hidden widths of ρ, comma-separated (`-` for a single affine map,
    /// `none` for no ρ).
    #[arg(long, default_value = "10")]
    pub rho_hidden: String,
    #[arg(long, default_value_t = 2)]
    pub rho_out: usize,
    /// Give every layer a bias vector.
    #[arg(long)]
    pub bias: bool,
    #[arg(long, default_value = "sum")]
    pub pooling: String,
    #[arg(long, default_value = "simplex")]
    pub coeff_mode: String,
    /// Sequence length used for operation counts.
    #[arg(long, default_value_t = 2)]
    pub n_h: usize,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

/// Builds the counted config. `widen` multiplies every φ width, which gives
/// the DeepSets model matching a Set Twister of `widen` banks.
pub fn shape(args: &CountArgs, arch: Architecture, widen: usize) -> Result<SetTwisterConfig> {
    let (m, k) = match arch {
        Architecture::DeepSets => (1, 1),
        Architecture::SetTwister => (args.m.unwrap_or(3), args.k.unwrap_or(2)),
    };
    let hidden: Vec<usize> = parse_widths(&args.phi_hidden)?.iter().map(|w| w * widen).collect();
    let rho = match args.rho_hidden.trim() {
        "none" => RhoSpec::None,
        widths => RhoSpec::Mlp {
            hidden: parse_widths(widths)?,
            out: args.rho_out,
            activation: Activation::Tanh,
            bias: args.bias,
        },
    };
    let mut c = SetTwisterConfig::new(m, k, args.d_in, args.d_rep * widen)
        .with_phi_hidden(hidden)
        .with_pooling(args.pooling.parse()?)
        .with_coefficient_mode(args.coeff_mode.parse()?)
        .with_rho(rho);
    if !args.bias {
        c = c.without_phi_bias();
    }
    c.validate_for(arch)?;
    Ok(c)
}

/// Default shape for `arch` and the sequence length it is counted at.
pub fn reference_config(arch: Architecture) -> (SetTwisterConfig, usize) {
    let args = CountArgs {
        model: None,
        m: Some(3),
        k: Some(2),
        d_in: 10,
        d_rep: 4,
        phi_hidden: "4,4".into(),
        rho_hidden: "10".into(),
        rho_out: 2,
        bias: false,
        pooling: "sum".into(),
        coeff_mode: "simplex".into(),
        n_h: 2,
        json: false,
    };
    let widen = if arch == Architecture::DeepSets { 3 } else { 1 };
    (shape(&args, arch, widen).expect("reference shape is valid"), 2)
}

/// Known totals for the reference shapes:
/// `((params without ρ, with ρ), (operations without ρ, with ρ))`.
pub fn reference_totals() -> [(Architecture, ((u128, u128), (u128, u128))); 2] {
    [
        (Architecture::SetTwister, ((240, 300), (512, 572))),
        (Architecture::DeepSets, ((408, 548), (828, 968))),
    ]
}

#[derive(Serialize)]
struct Breakdown {
    model: Architecture,
    m: usize,
    k: usize,
    d_rep: usize,
    phi_hidden: Vec<usize>,
    n_h: usize,
    params: ParamCount,
    flops: FlopCount,
}

fn breakdown(args: &CountArgs, arch: Architecture, widen: usize) -> Result<Breakdown> {
    let c = shape(args, arch, widen)?;
    Ok(Breakdown {
        model: arch,
        m: c.m,
        k: c.k,
        d_rep: c.d_rep,
        phi_hidden: c.phi_hidden.clone(),
        n_h: args.n_h,
        params: param_count(arch, &c)?,
        flops: flop_count(arch, &c, args.n_h)?,
    })
}

/// Prints counts for the requested model. A Set Twister is shown next to
/// the DeepSets model whose φ is `M` times wider.
pub fn print_breakdown(args: &CountArgs) -> Result<()> {
    let arch: Architecture = args.model.as_deref().unwrap_or("set-twister").parse()?;
    let mut rows = vec![breakdown(args, arch, 1)?];
    if arch == Architecture::SetTwister {
        rows.push(breakdown(args, Architecture::DeepSets, args.m.unwrap_or(3))?);
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
        return Ok(());
    }
    println!(
        "{:<12} {:>2} {:>2} {:>5} {:>10} {:>8} {:>8} {:>8} {:>10} {:>10}   {:>8} {:>8} {:>8} {:>8} {:>10} {:>10}",
        "model", "M", "k", "d_rep", "phi_hidden", "p.phi", "p.alpha", "p.rho", "p.no_rho", "p.total",
        "f.phi", "f.pool", "f.twist", "f.rho", "f.no_rho", "f.total"
    );
    for r in rows {
        let hidden = r.phi_hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        println!(
            "{:<12} {:>2} {:>2} {:>5} {:>10} {:>8} {:>8} {:>8} {:>10} {:>10}   {:>8} {:>8} {:>8} {:>8} {:>10} {:>10}",
            r.model.to_string(), r.m, r.k, r.d_rep, hidden,
            r.params.phi, r.params.alpha, r.params.rho, r.params.without_rho, r.params.with_rho,
            r.flops.phi, r.flops.pool, r.flops.twist, r.flops.rho, r.flops.without_rho, r.flops.with_rho
        );
    }
    Ok(())
}
