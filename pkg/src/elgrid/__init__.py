"""Balanced power-system analysis on element-based grid models."""
from .network import (ELEMENT_KINDS, Network, NetworkError, add_element, create_bus,
                      create_dcline, create_empty_network, create_ext_grid, create_gen,
                      create_impedance, create_line, create_line_from_parameters,
                      create_line_from_std_type, create_load, create_measurement, create_sgen,
                      create_shunt, create_switch, create_transformer,
                      create_transformer3w, create_transformer3w_from_parameters,
                      create_transformer_from_parameters, create_ward, create_xward,
                      remove_element, validate_network)
from .std_types import available_std_types, define_std_type, load_std_type
from .bbm import BBMHandle, build_admittance_matrix, convert
from .powerflow import (PFOptions, PowerFlowError, PowerFlowResult, run_ac_power_flow,
                        run_dc_power_flow, runpp)
from .shortcircuit import SCOptions, SCResult, run_short_circuit
from .estimation import (EstimationError, Measurement, SEOptions, SEResult, chi_squared_test,
                         estimate_state, remove_worst_measurement)
from .topology import (GraphOptions, is_radial, shortest_path_length_km, to_graph,
                       unsupplied_buses)
from .io import (export_case, import_case, load_network, read_measurements, read_profiles,
                 save_network, write_results)
from .casestudy import (SwitchingState, TimeSeriesConfig, enumerate_switching_states,
                        filter_feasible_states, optimize_time_step, run_time_series)

__version__ = "0.1.0"

__all__ = [n for n in dir() if not n.startswith("_")]
