"""Static SVG line plots: one panel per stack of sampled curves."""
import xml.etree.ElementTree as ET

import numpy as np

PANEL_W, PANEL_H, PAD = 320, 240, 28
CURVE_COLOR = "#1f77b4"
TEMPLATE_COLOR = "#ff7f0e"


def _points(y, lo, hi, x0):
    t = np.linspace(0.0, 1.0, len(y))
    span = hi - lo if hi > lo else 1.0
    xs = x0 + PAD + t * (PANEL_W - 2 * PAD)
    ys = PAD + (1.0 - (y - lo) / span) * (PANEL_H - 2 * PAD)
    return " ".join(f"{x:.2f},{v:.2f}" for x, v in zip(xs, ys))


def render(panels, title=None):
    """Build an SVG document.

    ``panels`` is a list of ``(name, rows, template)`` where ``rows`` is a
    2-D array with one curve per row and ``template`` an optional curve drawn
    in orange on top.
    """
    width = PANEL_W * max(1, len(panels))
    height = PANEL_H + (20 if title else 0)
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    if title:
        ET.SubElement(svg, "text", x="8", y="16", attrib={"font-size": "13", "font-family": "sans-serif"}).text = title
    for k, (name, rows, template) in enumerate(panels):
        g = ET.SubElement(svg, "g", transform=f"translate(0,{20 if title else 0})")
        x0 = k * PANEL_W
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        stacked = rows if template is None else np.vstack([rows, np.asarray(template, dtype=float)[None]])
        lo, hi = float(stacked.min()), float(stacked.max())
        ET.SubElement(g, "rect", x=str(x0 + PAD), y=str(PAD), width=str(PANEL_W - 2 * PAD),
                      height=str(PANEL_H - 2 * PAD), fill="none", stroke="#999999")
        ET.SubElement(g, "text", x=str(x0 + PAD), y=str(PAD - 8),
                      attrib={"font-size": "12", "font-family": "sans-serif"}).text = name
        for row in rows:
            ET.SubElement(g, "polyline", points=_points(row, lo, hi, x0), fill="none", stroke=CURVE_COLOR,
                          attrib={"stroke-width": "0.8", "stroke-opacity": "0.5"})
        if template is not None:
            ET.SubElement(g, "polyline", points=_points(np.asarray(template, dtype=float), lo, hi, x0),
                          fill="none", stroke=TEMPLATE_COLOR, attrib={"stroke-width": "2", "class": "template"})
    return ET.tostring(svg, encoding="unicode", xml_declaration=True)


def write_svg(path, panels, title=None):
    with open(path, "w") as fh:
        fh.write(render(panels, title))
