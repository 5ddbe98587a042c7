use genctl::cartpole::EnvConfig;

/// Independent integrator: solves the two coupled equations of motion
/// (cart translation and pole rotation about the pivot, pole inertia
/// 4/3 m l^2) as a 2x2 linear system by Cramer's rule.
pub fn reference_step(c: &EnvConfig, s: [f64; 4], push_right: bool) -> [f64; 4] {
    let [x, v, th, om] = s;
    let f = if push_right { c.force } else { -c.force };
    let (m, mc, l, g) = (c.pole_mass, c.cart_mass, c.pole_half_length, c.gravity);
    // (mc + m) xdd + m l cos(th) thdd = f + m l om^2 sin(th)
    // cos(th) xdd + 4/3 l thdd = g sin(th)
    let (a11, a12, b1) = (mc + m, m * l * th.cos(), f + m * l * om * om * th.sin());
    let (a21, a22, b2) = (th.cos(), 4.0 / 3.0 * l, g * th.sin());
    let det = a11 * a22 - a12 * a21;
    let xdd = (b1 * a22 - a12 * b2) / det;
    let thdd = (a11 * b2 - a21 * b1) / det;
    [x + c.tau * v, v + c.tau * xdd, th + c.tau * om, om + c.tau * thdd]
}
