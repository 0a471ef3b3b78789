use madnet::analysis::{analyze_scales, freq_swap, FreqSwap, ScaleAnalysis};
use madnet::data::{add_awgn, load_image, save_image};

use crate::{begin, create_dir, require_file, AnalyzeArgs, CliError, FreqSwapArgs, GlobalArgs, RESOLVED_CONFIG};

/// Images written by `freq-swap`: clean, degraded, clean lows with degraded
/// highs, degraded lows with clean highs.
pub const SWAP_FILES: [&str; 4] = [
    "clean.png",
    "degraded.png",
    "hybrid_high_freq_noise.png",
    "hybrid_low_freq_noise.png",
];

fn write_text(path: &std::path::Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::runtime(madnet::Error::io(path, e)))
}

pub fn cmd_analyze_scales(g: &GlobalArgs, a: &AnalyzeArgs) -> Result<ScaleAnalysis, CliError> {
    let mut s = begin("analyze-scales", g)?;
    require_file(&a.image, "--image")?;
    let image = s.require_path("image", Some(&a.image), "--image")?;
    let out = s.require_path("out", Some(&a.out), "--out")?;
    let sigma = s.pick("sigma", a.sigma, 25.0)?;
    let levels = s.pick("levels", a.levels, 4usize)?;
    let seed = s.pick("seed", g.seed, 0u64)?;
    if !(sigma > 0.0) {
        return Err(CliError::Usage(format!("--sigma must be positive, got {sigma}")));
    }
    if levels == 0 {
        return Err(CliError::Usage("--levels must be at least 1".into()));
    }
    let clean = load_image(&image).map_err(CliError::runtime)?;
    let result = analyze_scales(&clean, sigma, levels, seed).map_err(CliError::runtime)?;
    create_dir(&out)?;
    s.save_record(&out.join(RESOLVED_CONFIG))?;
    write_text(&out.join("scales.csv"), &result.csv())?;
    if !result.trend_non_decreasing() {
        log::warn!("PSNR drops toward a coarser scale on {}", image.display());
    }
    Ok(result)
}

pub fn cmd_freq_swap(g: &GlobalArgs, a: &FreqSwapArgs) -> Result<FreqSwap, CliError> {
    let mut s = begin("freq-swap", g)?;
    require_file(&a.clean, "--clean")?;
    let clean_path = s.require_path("clean", Some(&a.clean), "--clean")?;
    let degraded_path = s.pick_path("degraded", a.degraded.as_deref())?;
    let out = s.require_path("out", Some(&a.out), "--out")?;
    let ratio = s.pick("ratio", a.ratio, 0.125)?;
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CliError::Usage(format!("--ratio must lie in [0, 1], got {ratio}")));
    }
    let clean = load_image(&clean_path).map_err(CliError::runtime)?;
    let degraded = match &degraded_path {
        Some(p) => {
            require_file(p, "--degraded")?;
            load_image(p).map_err(CliError::runtime)?
        }
        None => {
            let sigma = s.pick("sigma", a.sigma, 25.0)?;
            let seed = s.pick("seed", g.seed, 0u64)?;
            if !(sigma >= 0.0) {
                return Err(CliError::Usage(format!("--sigma must be non-negative, got {sigma}")));
            }
            add_awgn(&clean, sigma, seed)
        }
    };
    let swap = freq_swap(&clean, &degraded, ratio).map_err(CliError::runtime)?;
    create_dir(&out)?;
    s.save_record(&out.join(RESOLVED_CONFIG))?;
    for (name, img) in SWAP_FILES
        .iter()
        .zip([&clean, &degraded, &swap.clean_low, &swap.degraded_low])
    {
        save_image(img, &out.join(name)).map_err(CliError::runtime)?;
    }
    write_text(&out.join("report.txt"), &swap.report())?;
    Ok(swap)
}
