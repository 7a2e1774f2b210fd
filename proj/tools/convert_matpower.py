#!/usr/bin/env python3
"""Convert a MATPOWER/PYPOWER AC case into a gridsense-case v1 DC network.

Conversion rules:
  * every in-service branch becomes a DC branch whose resistance is the
    branch series reactance x (p.u. on the system base), i.e. the standard
    DC power-flow network representation;
  * every bus with positive active demand Pd gets a constant-resistance load
    R = 1 / Pd_pu (the load resistance that draws Pd at 1.0 p.u. voltage);
  * bus shunts (Gs, Bs), line charging and transformer taps are dropped.

Usage: convert_matpower.py case9 > data/ieee9.case   (needs the pypower package)
"""
import importlib
import sys


def main():
    name = sys.argv[1]
    mod = importlib.import_module("pypower." + name)
    ppc = getattr(mod, name)()
    base = ppc["baseMVA"]
    out = sys.stdout
    out.write("gridsense-case v1\n")
    out.write(f"# {name}: DC resistive model derived by tools/convert_matpower.py\n")
    out.write("# branch resistance = series reactance x; loads folded as R = 1/Pd_pu\n")
    out.write("units pu\n\n[buses]\n# id name\n")
    for row in ppc["bus"]:
        out.write(f"{int(row[0])} bus{int(row[0])}\n")
    out.write("\n[branches]\n# from to resistance\n")
    for row in ppc["branch"]:
        if row[10] <= 0:
            continue
        x = abs(row[3])
        if x <= 0:
            raise SystemExit(f"branch {int(row[0])}-{int(row[1])} has zero reactance")
        out.write(f"{int(row[0])} {int(row[1])} {x:.6g}\n")
    out.write("\n[devices]\n# bus kind value\n")
    for row in ppc["bus"]:
        pd = row[2] / base
        if pd > 0:
            out.write(f"{int(row[0])} constant_resistance_load {1.0 / pd:.10g}\n")


if __name__ == "__main__":
    main()
