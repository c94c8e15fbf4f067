"""Build the five benchmark roundabouts, list their routes and draw one as SVG."""

# %% the family
from articnav.scenario import default_scenarios, first_exit_route
from articnav.evalkit import EpisodeTrace, min_route_radius, export_trace_svg

family = default_scenarios()
for name, sc in family.items():
    print(name, len(sc.spec.entries), "entries", len(sc.routes), "routes")

# %% routes of the smallest one
sc = family["roundabout_16m"]
for i, r in enumerate(sc.routes[:5]):
    print(i, "entry", r.entry_index, "exit", r.exit_index, "lanes", r.lane_sequence,
          "length %.1f m" % r.length, "tightest %.1f m" % min_route_radius(r))

# %% map with the first-exit route, no driving yet
rid = first_exit_route(sc)
export_trace_svg(EpisodeTrace(route_id=rid), sc, "roundabout_16m.svg")
print("wrote roundabout_16m.svg")
