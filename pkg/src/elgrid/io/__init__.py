"""Grid files, case files, measurement/profile CSVs and result export."""
from .casefile import export_case, import_case, parse_case, write_case
from .csvfiles import (apply_profile, read_measurements, read_profiles, read_results,
                       write_measurements, write_results)
from .jsonfile import (FORMAT_VERSION, GridFileError, load_network, network_from_dict,
                       network_to_dict, save_network)
