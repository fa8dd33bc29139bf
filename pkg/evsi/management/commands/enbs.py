from django.conf import settings
from django.core.management.base import CommandError

from evsi.case_study import PopulationSpec, build_scenario, enbs, load_model_config, population_evsi
from evsi.export import ensure_output_dir
from evsi.serializers import EnbsSerializer

from ._base import EXIT_ERROR, EvsiBaseCommand


class Command(EvsiBaseCommand):
    help = "EVSI poblacional y ENBS a partir de valores de EVSI por persona ya estimados."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--per-person', dest='per_person', nargs='+', type=float, required=True,
                            help="EVSI por persona, uno por escenario de --scenarios")
        parser.add_argument('--scenarios', nargs='+', default=['1', '2', '3'],
                            help="Escenarios en el mismo orden que --per-person")
        parser.add_argument('--population', type=float,
                            help="Población descontada (por defecto la del archivo del modelo)")

    def handle(self, *args, **options):
        if len(options['per_person']) != len(options['scenarios']):
            raise CommandError("❌ --per-person y --scenarios deben tener el mismo largo", returncode=EXIT_ERROR)
        self.per_person = options['per_person']
        self.scenarios = options['scenarios']
        self.population = options['population']
        return super().handle(*args, **options)

    def run(self, config):
        model_config = load_model_config(settings.EVSI['MODEL_CONFIG'])
        population = PopulationSpec(**model_config['population'])
        if self.population is not None:
            population = PopulationSpec(total_discounted_population=self.population)

        rows = []
        for scenario_id, per_person in zip(self.scenarios, self.per_person):
            scenario = build_scenario(scenario_id, model_config)
            pop_evsi = population_evsi(per_person, population)
            rows.append({
                'scenario': str(scenario.id),
                'per_person_evsi': per_person,
                'population': population.total_discounted_population,
                'population_evsi': pop_evsi,
                'study_cost': scenario.study_cost,
                'enbs': enbs(pop_evsi, scenario.study_cost),
            })
            self.stdout.write(
                f"Escenario {scenario.id}: EVSI poblacional ${pop_evsi:,.0f}, ENBS ${rows[-1]['enbs']:,.0f}"
            )

        self.write(EnbsSerializer, rows, self.output_prefix(config), 'enbs', config)
        return {'converged': True, 'model_evaluations': 0}

    def output_prefix(self, config):
        return ensure_output_dir(config['out']) / 'enbs'
