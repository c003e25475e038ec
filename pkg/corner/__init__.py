from corner.growth import GrowthTable, competition_interface, compute_growth, simulate_growth
from corner.interface import InitialInterface, sample_random_walk
from corner.lattice import RngStream, Site, WeightField
from corner.shape import DensityPair
from corner.tasep import harris_simulate
