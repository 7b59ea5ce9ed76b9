# Registry of the diagram generator classes, looked up by name.

from .cfg_graph import CfgGraph
from .gas_fit_chart import GasFitChart
from .path_slack_chart import PathSlackChart

DIAGRAM_REGISTRY = {
    "cfg_graph": CfgGraph,
    "gas_fit_chart": GasFitChart,
    "path_slack_chart": PathSlackChart,
}
