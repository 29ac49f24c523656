//! Fixed 9-significant-digit number formatting for CSV output.
//!
//! All numeric CSV emitted by this crate goes through [`g9`] so that reports
//! are diffable across runs and platforms. The rendering follows printf's
//! `%.9g`: plain decimal notation while the decimal exponent is in [-4, 9),
//! scientific notation outside it, trailing zeros stripped either way.

pub fn g9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{x:.8e}");
    let epos = sci.find('e').expect("exponential format");
    let exp: i32 = sci[epos + 1..].parse().expect("exponent digits");
    if (-4..9).contains(&exp) {
        let prec = (8 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.prec$}"))
    } else {
        let mantissa = strip_zeros(&sci[..epos]);
        format!("{mantissa}e{}{:02}", if exp < 0 { "-" } else { "+" }, exp.abs())
    }
}

fn strip_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}
